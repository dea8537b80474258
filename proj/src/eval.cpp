#include "spcnav/eval.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace spcnav::eval {

namespace {

StepTrace make_trace(const agent::StepOutput& out) {
    StepTrace t;
    t.alpha = out.alpha.data();
    t.gamma = out.gamma.data();
    t.image_weights = out.image_weights.data();
    t.p = out.p.data();
    if (out.sim.defined()) t.sim = out.sim.data();
    t.progress = out.progress.item();
    return t;
}

}  // namespace

TrajectoryResult run_greedy_episode(const agent::Model& model, const world::GraphWorld& w,
                                    const world::Episode& episode, double threshold) {
    const auto parsed = parse::parse_instruction(episode.instruction, parse::builtin_lexicon());
    const auto bank = model.encode(parsed);
    auto state = model.init_state(bank);

    TrajectoryResult r;
    r.episode_id = episode.id;
    r.config_texts = bank.texts;
    r.shortest_length = world::path_length(w, episode.gold_path);
    const auto from_goal = world::shortest_paths(w, episode.goal);

    int cur = episode.start;
    r.path.push_back(cur);
    for (int t = 0; t < model.config().max_steps; ++t) {
        const auto obs = world::observe(w, cur, model.config().top_k_objects);
        auto [next, out] = model.step(state, bank, obs);
        state = std::move(next);
        const int action = agent::select_action(out.p, agent::ActionMode::Greedy);
        StepTrace trace = make_trace(out);
        trace.action = action;
        r.traces.push_back(std::move(trace));
        if (action == out.stop_action()) break;
        const auto sr = world::step_env(w, cur, action);
        r.trajectory_length += w.edge_length(cur, sr.viewpoint);
        cur = sr.viewpoint;
        r.path.push_back(cur);
    }
    r.final_distance = from_goal.dist[static_cast<std::size_t>(cur)];
    r.success = r.final_distance <= threshold;
    return r;
}

namespace {

int g_jobs = 1;

}  // namespace

void set_jobs(int jobs) { g_jobs = std::max(1, jobs); }
int jobs() { return g_jobs; }

std::vector<TrajectoryResult> run_greedy(const agent::Model& model,
                                         const world::Benchmark& bench,
                                         const std::vector<world::Episode>& episodes,
                                         double threshold) {
    std::vector<TrajectoryResult> out(episodes.size());
    const int workers = std::min<int>(g_jobs, static_cast<int>(episodes.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < episodes.size(); ++i)
            out[i] = run_greedy_episode(model, bench.world_of(episodes[i]), episodes[i], threshold);
        return out;
    }
    std::vector<std::thread> pool;
    for (int wkr = 0; wkr < workers; ++wkr) {
        pool.emplace_back([&, wkr]() {
            for (std::size_t i = static_cast<std::size_t>(wkr); i < episodes.size();
                 i += static_cast<std::size_t>(workers))
                out[i] = run_greedy_episode(model, bench.world_of(episodes[i]), episodes[i],
                                            threshold);
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

Metrics metrics(const std::vector<TrajectoryResult>& results, double threshold) {
    if (results.empty()) throw std::invalid_argument("metrics: empty result set");
    Metrics m;
    m.count = results.size();
    double ne = 0.0, sr = 0.0, spl = 0.0;
    for (const auto& r : results) {
        ne += r.final_distance;
        const bool success = r.final_distance <= threshold;
        if (success) {
            sr += 1.0;
            const double l = r.shortest_length;
            const double p = r.trajectory_length;
            const double denom = std::max(p, l);
            spl += denom > 0.0 ? l / denom : 1.0;
        }
    }
    const double n = static_cast<double>(results.size());
    m.ne = ne / n;
    m.sr = sr / n;
    m.spl = spl / n;
    return m;
}

std::vector<AblationVariant> default_ablation_variants() {
    return {{"base", false, false, false},
            {"+M", true, false, false},
            {"+M+L", true, true, false},
            {"+M+L+S", true, true, true}};
}

AblationTable run_ablation(const world::Benchmark& bench, const agent::ModelConfig& base,
                           const train::TrainConfig& tcfg,
                           const std::vector<std::uint64_t>& seeds,
                           const std::vector<AblationVariant>& variants) {
    AblationTable table;
    table.seeds = seeds;
    const auto vocab = agent::Vocabulary::build_default(world::default_object_vocab());
    for (const auto& variant : variants) {
        agent::ModelConfig cfg = base;
        cfg.use_motion = variant.use_motion;
        cfg.use_landmark = variant.use_landmark;
        cfg.use_similarity = variant.use_similarity;
        AblationCell seen{}, unseen{};
        for (std::uint64_t seed : seeds) {
            agent::Model model(cfg, vocab, seed);
            train::TrainConfig t = tcfg;
            t.seed = seed;
            train::train_loop(model, bench, t, "");
            const auto rs = run_greedy(model, bench, bench.val_seen);
            const auto ru = run_greedy(model, bench, bench.val_unseen);
            const Metrics ms = metrics(rs);
            const Metrics mu = metrics(ru);
            seen.ne += ms.ne;
            seen.sr += ms.sr;
            seen.spl += ms.spl;
            unseen.ne += mu.ne;
            unseen.sr += mu.sr;
            unseen.spl += mu.spl;
        }
        const double k = static_cast<double>(seeds.size());
        seen.ne /= k;
        seen.sr /= k;
        seen.spl /= k;
        unseen.ne /= k;
        unseen.sr /= k;
        unseen.spl /= k;
        table.rows.push_back({variant.name, seen, unseen});
    }
    return table;
}

std::string ablation_to_json(const AblationTable& table) {
    nlohmann::json j;
    j["seeds"] = table.seeds;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        rows.push_back({{"variant", r.variant},
                        {"seen", {{"ne", r.seen.ne}, {"sr", r.seen.sr}, {"spl", r.seen.spl}}},
                        {"unseen",
                         {{"ne", r.unseen.ne}, {"sr", r.unseen.sr}, {"spl", r.unseen.spl}}}});
    }
    j["rows"] = rows;
    return j.dump(2);
}

void export_attention(const TrajectoryResult& result, const std::string& csv_path,
                      const std::string& sidecar_path) {
    if (result.traces.empty())
        throw std::invalid_argument("export_attention: empty trace");
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("export_attention: cannot open " + csv_path);
    for (const auto& t : result.traces) {
        for (std::size_t i = 0; i < t.alpha.size(); ++i) {
            if (i) csv << ',';
            csv << nlohmann::json(t.alpha[i]).dump();
        }
        csv << '\n';
    }
    if (!csv) throw std::runtime_error("export_attention: write failed: " + csv_path);

    nlohmann::json side;
    side["episode_id"] = result.episode_id;
    side["configurations"] = result.config_texts;
    side["steps"] = result.traces.size();
    std::ofstream js(sidecar_path, std::ios::trunc);
    if (!js) throw std::runtime_error("export_attention: cannot open " + sidecar_path);
    js << side.dump(2) << '\n';
}

std::string trajectory_to_json(const TrajectoryResult& r, bool include_traces) {
    nlohmann::json j;
    j["episode_id"] = r.episode_id;
    j["path"] = r.path;
    j["trajectory_length"] = r.trajectory_length;
    j["final_distance"] = r.final_distance;
    j["shortest_length"] = r.shortest_length;
    j["success"] = r.success;
    if (include_traces) {
        nlohmann::json traces = nlohmann::json::array();
        for (const auto& t : r.traces) {
            traces.push_back({{"alpha", t.alpha},
                              {"gamma", t.gamma},
                              {"image_weights", t.image_weights},
                              {"p", t.p},
                              {"sim", t.sim},
                              {"progress", t.progress},
                              {"action", t.action}});
        }
        j["traces"] = traces;
        j["configurations"] = r.config_texts;
    }
    return j.dump();
}

TrajectoryResult trajectory_from_json(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    TrajectoryResult r;
    r.episode_id = j.at("episode_id").get<std::string>();
    r.path = j.at("path").get<std::vector<int>>();
    r.trajectory_length = j.at("trajectory_length").get<double>();
    r.final_distance = j.at("final_distance").get<double>();
    r.shortest_length = j.at("shortest_length").get<double>();
    r.success = j.at("success").get<bool>();
    if (j.contains("traces")) {
        for (const auto& jt : j.at("traces")) {
            StepTrace t;
            t.alpha = jt.at("alpha").get<std::vector<double>>();
            t.gamma = jt.at("gamma").get<std::vector<double>>();
            t.image_weights = jt.at("image_weights").get<std::vector<double>>();
            t.p = jt.at("p").get<std::vector<double>>();
            t.sim = jt.at("sim").get<std::vector<double>>();
            t.progress = jt.at("progress").get<double>();
            t.action = jt.at("action").get<int>();
            r.traces.push_back(std::move(t));
        }
        r.config_texts = j.at("configurations").get<std::vector<std::string>>();
    }
    return r;
}

}  // namespace spcnav::eval
