#include "spcnav/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "spcnav/eval.hpp"
#include "spcnav/model.hpp"
#include "spcnav/parse.hpp"
#include "spcnav/train.hpp"
#include "spcnav/world.hpp"

namespace spcnav::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fnv1a_hex(const std::string& bytes) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    return buf;
}

struct RunContext {
    std::string command;
    std::vector<std::string> argv;
    std::uint64_t seed = 7;
    std::string out;       // file or directory, per command
    bool out_is_dir = true;
    nlohmann::json resolved_config = nlohmann::json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    std::string out_dir() const {
        return out_is_dir ? out : fs::path(out).parent_path().string();
    }
    std::string manifest_path() const {
        return out_is_dir ? out + "/manifest.json" : out + ".manifest.json";
    }
    void write_manifest() const {
        nlohmann::json j;
        j["command"] = command;
        j["argv"] = argv;
        j["seed"] = seed;
        j["config"] = resolved_config;
        j["code_version"] = kVersion;
        nlohmann::json hashes = nlohmann::json::object();
        for (const auto& p : inputs) hashes[p] = fnv1a_hex(read_file(p));
        j["input_hashes"] = hashes;
        j["outputs"] = outputs;
        const auto dir = out_dir();
        if (!dir.empty()) fs::create_directories(dir);
        std::ofstream os(manifest_path(), std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write manifest " + manifest_path());
        os << j.dump(2) << '\n';
    }
};

void resolve_out(RunContext& ctx, std::string& out_flag) {
    if (out_flag.empty()) {
        const char* root = std::getenv("SPCNAV_OUT");
        if (!root || !*root)
            throw std::runtime_error("--out not given and SPCNAV_OUT is not set");
        out_flag = std::string(root) + "/" + ctx.command;
        if (!ctx.out_is_dir) out_flag += ".out";
    }
    ctx.out = out_flag;
}

// ---- resolved run configuration (defaults < config file < flags) ----

struct Settings {
    agent::ModelConfig model;
    train::TrainConfig train;
    world::BenchmarkSpec bench;
};

Settings ref_settings() {
    Settings s;
    s.model.token_emb_dim = 32;
    s.model.hidden_dim = 64;
    s.model.role_emb_dim = 32;
    s.model.object_emb_dim = 32;
    s.model.max_steps = 10;
    s.train.lr = 1e-3;
    s.train.batch_size = 16;
    s.train.epochs = 30;
    s.train.seed = 7;
    s.bench.seed = 7;
    return s;
}

void apply_json(Settings& s, const nlohmann::json& j) {
    if (j.contains("model")) {
        const auto& m = j.at("model");
        auto get = [&](const char* k, auto& v) {
            if (m.contains(k)) v = m.at(k).template get<std::decay_t<decltype(v)>>();
        };
        get("token_emb_dim", s.model.token_emb_dim);
        get("hidden_dim", s.model.hidden_dim);
        get("role_emb_dim", s.model.role_emb_dim);
        get("object_emb_dim", s.model.object_emb_dim);
        get("appearance_dim", s.model.appearance_dim);
        get("n_max_images", s.model.n_max_images);
        get("top_k_objects", s.model.top_k_objects);
        get("elevations", s.model.elevations);
        get("max_steps", s.model.max_steps);
        get("use_motion", s.model.use_motion);
        get("use_landmark", s.model.use_landmark);
        get("use_similarity", s.model.use_similarity);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        auto get = [&](const char* k, auto& v) {
            if (t.contains(k)) v = t.at(k).template get<std::decay_t<decltype(v)>>();
        };
        get("lr", s.train.lr);
        get("batch_size", s.train.batch_size);
        get("epochs", s.train.epochs);
        get("progress_loss_weight", s.train.progress_loss_weight);
        get("sample_prob_start", s.train.sample_prob_start);
        get("sample_prob_end", s.train.sample_prob_end);
        get("seed", s.train.seed);
    }
    if (j.contains("benchmark")) {
        const auto& b = j.at("benchmark");
        auto get = [&](const char* k, auto& v) {
            if (b.contains(k)) v = b.at(k).template get<std::decay_t<decltype(v)>>();
        };
        get("train_worlds", s.bench.train_worlds);
        get("unseen_worlds", s.bench.unseen_worlds);
        get("viewpoints", s.bench.viewpoints);
        get("episodes_per_world", s.bench.episodes_per_world);
        get("val_seen_per_world", s.bench.val_seen_per_world);
        get("val_unseen_per_world", s.bench.val_unseen_per_world);
        get("seed", s.bench.seed);
        if (b.contains("min_hops")) s.bench.episode.min_hops = b.at("min_hops").get<int>();
        if (b.contains("max_hops")) s.bench.episode.max_hops = b.at("max_hops").get<int>();
        if (b.contains("turn_clause_prob"))
            s.bench.episode.turn_clause_prob = b.at("turn_clause_prob").get<double>();
    }
}

nlohmann::json settings_json(const Settings& s) {
    nlohmann::json j;
    j["version"] = 1;
    j["model"] = {{"token_emb_dim", s.model.token_emb_dim},
                  {"hidden_dim", s.model.hidden_dim},
                  {"role_emb_dim", s.model.role_emb_dim},
                  {"object_emb_dim", s.model.object_emb_dim},
                  {"appearance_dim", s.model.appearance_dim},
                  {"n_max_images", s.model.n_max_images},
                  {"top_k_objects", s.model.top_k_objects},
                  {"elevations", s.model.elevations},
                  {"max_steps", s.model.max_steps},
                  {"use_motion", s.model.use_motion},
                  {"use_landmark", s.model.use_landmark},
                  {"use_similarity", s.model.use_similarity}};
    j["train"] = {{"lr", s.train.lr},
                  {"batch_size", s.train.batch_size},
                  {"epochs", s.train.epochs},
                  {"progress_loss_weight", s.train.progress_loss_weight},
                  {"sample_prob_start", s.train.sample_prob_start},
                  {"sample_prob_end", s.train.sample_prob_end},
                  {"seed", s.train.seed}};
    j["benchmark"] = {{"train_worlds", s.bench.train_worlds},
                      {"unseen_worlds", s.bench.unseen_worlds},
                      {"viewpoints", s.bench.viewpoints},
                      {"episodes_per_world", s.bench.episodes_per_world},
                      {"val_seen_per_world", s.bench.val_seen_per_world},
                      {"val_unseen_per_world", s.bench.val_unseen_per_world},
                      {"min_hops", s.bench.episode.min_hops},
                      {"max_hops", s.bench.episode.max_hops},
                      {"turn_clause_prob", s.bench.episode.turn_clause_prob},
                      {"seed", s.bench.seed}};
    return j;
}

world::Benchmark load_benchmark(const std::string& name, Settings& s, RunContext& ctx) {
    if (name == "ref") {
        Settings ref = ref_settings();
        // Only the benchmark shape comes from ref here; model/train settings
        // were already resolved by the caller.
        s.bench = ref.bench;
        return world::generate_benchmark(s.bench);
    }
    // Otherwise: a benchmark spec file.
    ctx.inputs.push_back(name);
    nlohmann::json j = nlohmann::json::parse(read_file(name));
    apply_json(s, j);
    return world::generate_benchmark(s.bench);
}

std::vector<world::GraphWorld> load_worlds(const std::string& path, RunContext& ctx) {
    std::vector<world::GraphWorld> worlds;
    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.path().extension() == ".json" &&
                e.path().filename().string().rfind("world_", 0) == 0)
                files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            ctx.inputs.push_back(f);
            worlds.push_back(world::world_from_json(read_file(f)));
        }
    } else {
        ctx.inputs.push_back(path);
        worlds.push_back(world::world_from_json(read_file(path)));
    }
    if (worlds.empty()) throw std::runtime_error("no world files found under " + path);
    return worlds;
}

std::vector<world::Episode> load_episodes(const std::string& path, RunContext& ctx) {
    ctx.inputs.push_back(path);
    std::vector<world::Episode> out;
    std::istringstream is(read_file(path));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(world::episode_from_json(line));
    }
    if (out.empty()) throw std::runtime_error("no episodes in " + path);
    return out;
}

world::Benchmark benchmark_from_files(const std::string& worlds_path,
                                      const std::string& episodes_path, RunContext& ctx) {
    world::Benchmark b;
    auto worlds = load_worlds(worlds_path, ctx);
    auto episodes = load_episodes(episodes_path, ctx);
    for (auto& e : episodes) {
        if (e.split == "train")
            b.train.push_back(e);
        else if (e.split == "val_seen")
            b.val_seen.push_back(e);
        else if (e.split == "val_unseen")
            b.val_unseen.push_back(e);
        else
            throw std::runtime_error("episode " + e.id + ": unknown split '" + e.split + "'");
    }
    for (auto& w : worlds) {
        bool unseen = true;
        for (const auto& e : b.train)
            if (e.world_id == w.id) unseen = false;
        for (const auto& e : b.val_seen)
            if (e.world_id == w.id) unseen = false;
        (unseen ? b.unseen_worlds : b.train_worlds).push_back(std::move(w));
    }
    return b;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// ---- subcommand bodies ----

int cmd_gen_world(RunContext& ctx, int count, int size) {
    ctx.write_manifest();
    fs::create_directories(ctx.out);
    for (int i = 0; i < count; ++i) {
        world::GraphWorld w =
            world::generate_world(size, world::default_object_vocab(), mix(ctx.seed, static_cast<std::uint64_t>(i)));
        char id[32];
        std::snprintf(id, sizeof(id), "w%03d", i);
        w.id = id;
        char name[48];
        std::snprintf(name, sizeof(name), "%s/world_%03d.json", ctx.out.c_str(), i);
        std::ofstream os(name, std::ios::trunc);
        os << world_to_json(w) << '\n';
        if (!os) throw std::runtime_error(std::string("write failed: ") + name);
        world::world_from_json(read_file(name));  // schema self-check
        ctx.outputs.push_back(name);
    }
    ctx.write_manifest();
    return 0;
}

int cmd_gen_episodes(RunContext& ctx, const std::string& worlds_path, int per_world,
                     const std::string& split, const world::EpisodeSpec& espec) {
    auto worlds = load_worlds(worlds_path, ctx);
    ctx.write_manifest();
    fs::create_directories(ctx.out);
    const std::string out_file = ctx.out + "/episodes.jsonl";
    std::ofstream os(out_file, std::ios::trunc);
    for (const auto& w : worlds) {
        for (int k = 0; k < per_world; ++k) {
            char id[96];
            std::snprintf(id, sizeof(id), "%s_%s_%03d", w.id.c_str(), split.c_str(), k);
            const auto e = world::generate_episode(
                w, espec, mix(mix(ctx.seed, static_cast<std::uint64_t>(k)), fnv1a(w.id)), id,
                split);
            os << world::episode_to_json(e) << '\n';
        }
    }
    if (!os) throw std::runtime_error("write failed: " + out_file);
    os.close();
    for (const auto& e : load_episodes(out_file, ctx)) (void)e;  // schema self-check
    ctx.inputs.pop_back();  // the self-check re-added the output as an input
    ctx.outputs.push_back(out_file);
    ctx.write_manifest();
    return 0;
}

int cmd_parse(RunContext& ctx, const std::string& in_path, const std::string& lexicon_path,
              const std::string& format) {
    const parse::MotionLexicon lex = lexicon_path.empty()
                                          ? parse::builtin_lexicon()
                                          : parse::MotionLexicon::load(lexicon_path);
    if (!lexicon_path.empty()) ctx.inputs.push_back(lexicon_path);
    ctx.inputs.push_back(in_path);
    ctx.write_manifest();

    std::ofstream os(ctx.out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + ctx.out);
    if (format == "raw") {
        std::istringstream is(read_file(in_path));
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            const auto parsed = parse::parse_instruction(line, lex);
            os << parse::annotation_to_json(
                      parse::to_annotation(parsed, "line_" + std::to_string(lineno)))
               << '\n';
        }
    } else if (format == "conll") {
        // Instructions separated by comment lines "# id = <instruction_id>".
        const std::string text = read_file(in_path);
        std::istringstream is(text);
        std::string line, cur_id = "instr_1", block;
        std::vector<std::pair<std::string, std::string>> instructions;
        while (std::getline(is, line)) {
            if (line.rfind("# id =", 0) == 0) {
                if (!block.empty()) instructions.push_back({cur_id, block});
                block.clear();
                cur_id = line.substr(6);
                const auto b = cur_id.find_first_not_of(" \t");
                cur_id = b == std::string::npos ? "instr" : cur_id.substr(b);
            } else {
                block += line;
                block += '\n';
            }
        }
        if (!block.empty()) instructions.push_back({cur_id, block});
        for (const auto& [id, body] : instructions) {
            const auto sentences = parse::parse_corpus_text(body, in_path);
            if (sentences.empty()) continue;
            const auto parsed = parse::parse_instruction(sentences, lex);
            os << parse::annotation_to_json(parse::to_annotation(parsed, id)) << '\n';
        }
    } else {
        throw std::runtime_error("unknown --format '" + format + "' (raw|conll)");
    }
    if (!os) throw std::runtime_error("write failed: " + ctx.out);
    os.close();
    {
        std::istringstream check(read_file(ctx.out));
        std::string line;
        while (std::getline(check, line))
            if (!line.empty()) parse::annotation_from_json(line);
    }
    ctx.outputs.push_back(ctx.out);
    ctx.write_manifest();
    return 0;
}

int cmd_eval_parser(RunContext& ctx, const std::string& pred_path, const std::string& gold_path) {
    ctx.inputs.push_back(pred_path);
    ctx.inputs.push_back(gold_path);
    ctx.write_manifest();
    auto load = [](const std::string& p) {
        std::vector<parse::GoldAnnotation> anns;
        std::istringstream is(read_file(p));
        std::string line;
        while (std::getline(is, line))
            if (!line.empty()) anns.push_back(parse::annotation_from_json(line));
        return anns;
    };
    const auto rep = parse::evaluate_parser(load(pred_path), load(gold_path));
    nlohmann::json j;
    j["configuration_accuracy"] = rep.configuration_accuracy;
    j["indicator_accuracy"] = rep.indicator_accuracy;
    j["landmark_accuracy"] = rep.landmark_accuracy;
    j["instruction_count"] = rep.instruction_count;
    j["gold_configuration_count"] = rep.gold_configuration_count;
    std::ofstream os(ctx.out, std::ios::trunc);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: " + ctx.out);
    ctx.outputs.push_back(ctx.out);
    ctx.write_manifest();
    return 0;
}

int cmd_train(RunContext& ctx, Settings s, const std::string& benchmark,
              const std::string& worlds_path, const std::string& episodes_path,
              const std::string& resume) {
    world::Benchmark bench;
    if (!benchmark.empty())
        bench = load_benchmark(benchmark, s, ctx);
    else if (!worlds_path.empty() && !episodes_path.empty())
        bench = benchmark_from_files(worlds_path, episodes_path, ctx);
    else
        throw std::runtime_error("train: give --benchmark or both --worlds and --episodes");

    ctx.resolved_config = settings_json(s);
    int start_epoch = 0;
    std::optional<agent::Model> model;
    if (!resume.empty()) {
        ctx.inputs.push_back(resume);
        model = agent::Model::load(resume);
        const auto extra = nlohmann::json::parse(agent::Model::peek_extra(resume));
        start_epoch = extra.value("epoch", 0);
        s.train.seed = extra.value("seed", s.train.seed);
    } else {
        model = agent::Model(s.model, agent::Vocabulary::build_default(world::default_object_vocab()),
                             s.train.seed);
    }
    ctx.write_manifest();
    const auto result = train::train_loop(*model, bench, s.train, ctx.out, start_epoch);
    ctx.outputs.push_back(ctx.out + "/metrics.jsonl");
    ctx.outputs.push_back(ctx.out + "/timing.jsonl");
    if (!result.last_checkpoint.empty()) ctx.outputs.push_back(result.last_checkpoint);
    if (!result.best_checkpoint.empty()) ctx.outputs.push_back(result.best_checkpoint);
    ctx.write_manifest();
    return 0;
}

int cmd_eval(RunContext& ctx, Settings s, const std::string& checkpoint,
             const std::string& benchmark, const std::string& worlds_path,
             const std::string& episodes_path, const std::string& split, bool traces) {
    ctx.inputs.push_back(checkpoint);
    world::Benchmark bench;
    if (!benchmark.empty())
        bench = load_benchmark(benchmark, s, ctx);
    else if (!worlds_path.empty() && !episodes_path.empty())
        bench = benchmark_from_files(worlds_path, episodes_path, ctx);
    else
        throw std::runtime_error("eval: give --benchmark or both --worlds and --episodes");
    ctx.resolved_config = settings_json(s);
    ctx.write_manifest();

    agent::Model model = agent::Model::load(checkpoint);
    std::vector<world::Episode> episodes;
    if (split == "seen" || split == "all")
        episodes.insert(episodes.end(), bench.val_seen.begin(), bench.val_seen.end());
    if (split == "unseen" || split == "all")
        episodes.insert(episodes.end(), bench.val_unseen.begin(), bench.val_unseen.end());
    if (split == "train")
        episodes = bench.train;
    if (episodes.empty()) throw std::runtime_error("eval: no episodes for split '" + split + "'");

    const auto results = eval::run_greedy(model, bench, episodes);
    const auto m = eval::metrics(results);
    fs::create_directories(ctx.out);
    const std::string results_path = ctx.out + "/results.jsonl";
    std::ofstream os(results_path, std::ios::trunc);
    for (const auto& r : results) os << eval::trajectory_to_json(r, traces) << '\n';
    if (!os) throw std::runtime_error("write failed: " + results_path);
    os.close();
    const std::string summary_path = ctx.out + "/summary.json";
    nlohmann::json j;
    j["split"] = split;
    j["count"] = m.count;
    j["ne"] = m.ne;
    j["sr"] = m.sr;
    j["spl"] = m.spl;
    std::ofstream ss(summary_path, std::ios::trunc);
    ss << j.dump(2) << '\n';
    if (!ss) throw std::runtime_error("write failed: " + summary_path);
    ctx.outputs.push_back(results_path);
    ctx.outputs.push_back(summary_path);
    ctx.write_manifest();
    return 0;
}

int cmd_ablate(RunContext& ctx, Settings s, const std::string& benchmark,
               const std::string& seeds_csv, int epochs_override) {
    world::Benchmark bench = load_benchmark(benchmark, s, ctx);
    if (epochs_override > 0) s.train.epochs = epochs_override;
    ctx.resolved_config = settings_json(s);
    ctx.write_manifest();
    std::vector<std::uint64_t> seeds;
    std::istringstream ss(seeds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
    if (seeds.empty()) throw std::runtime_error("ablate: no seeds given");
    const auto table = eval::run_ablation(bench, s.model, s.train, seeds);
    std::ofstream os(ctx.out, std::ios::trunc);
    os << eval::ablation_to_json(table) << '\n';
    if (!os) throw std::runtime_error("write failed: " + ctx.out);
    ctx.outputs.push_back(ctx.out);
    ctx.write_manifest();
    return 0;
}

int cmd_export_attn(RunContext& ctx, const std::string& results_path,
                    const std::string& episode_id) {
    ctx.inputs.push_back(results_path);
    ctx.write_manifest();
    std::istringstream is(read_file(results_path));
    std::string line;
    std::optional<eval::TrajectoryResult> chosen;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto r = eval::trajectory_from_json(line);
        if (episode_id.empty() || r.episode_id == episode_id) {
            chosen = std::move(r);
            break;
        }
    }
    if (!chosen)
        throw std::runtime_error("export-attn: episode '" + episode_id + "' not found in results");
    const std::string sidecar = ctx.out + ".json";
    eval::export_attention(*chosen, ctx.out, sidecar);
    ctx.outputs.push_back(ctx.out);
    ctx.outputs.push_back(sidecar);
    ctx.write_manifest();
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"spcnav: spatial-configuration navigation agent toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 7;
    std::string config_path, out;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
    app.add_option("--config", config_path, "JSON config file (model/train/benchmark)");
    app.add_option("--out", out, "output file or directory (default $SPCNAV_OUT/<cmd>)");
    app.add_option("--jobs", jobs, "worker threads for evaluation")->capture_default_str();

    // gen-world
    auto* gw = app.add_subcommand("gen-world", "generate graph worlds");
    int gw_count = 1, gw_size = 30;
    gw->add_option("--count", gw_count, "number of worlds")->capture_default_str();
    gw->add_option("--size", gw_size, "viewpoints per world")->capture_default_str();

    // gen-episodes
    auto* ge = app.add_subcommand("gen-episodes", "generate episodes for existing worlds");
    std::string ge_worlds, ge_split = "train";
    int ge_per_world = 10, ge_min = 2, ge_max = 4;
    double ge_turn = 0.25;
    ge->add_option("--worlds", ge_worlds, "world file or directory")->required();
    ge->add_option("--per-world", ge_per_world, "episodes per world")->capture_default_str();
    ge->add_option("--split", ge_split, "split tag (train|val_seen|val_unseen)")
        ->capture_default_str();
    ge->add_option("--min-hops", ge_min)->capture_default_str();
    ge->add_option("--max-hops", ge_max)->capture_default_str();
    ge->add_option("--turn-prob", ge_turn, "probability of a turn clause")->capture_default_str();

    // parse
    auto* pa = app.add_subcommand("parse", "extract spatial configurations from instructions");
    std::string pa_in, pa_lexicon, pa_format = "raw";
    pa->add_option("--in", pa_in, "input file")->required();
    pa->add_option("--lexicon", pa_lexicon, "verb-phrase lexicon (default: built-in)");
    pa->add_option("--format", pa_format, "raw (one instruction per line) or conll")
        ->capture_default_str();

    // eval-parser
    auto* ep = app.add_subcommand("eval-parser", "score parser output against gold annotations");
    std::string ep_pred, ep_gold;
    ep->add_option("--pred", ep_pred)->required();
    ep->add_option("--gold", ep_gold)->required();

    // train
    auto* tr = app.add_subcommand("train", "train the agent");
    std::string tr_benchmark, tr_worlds, tr_episodes, tr_resume;
    int tr_epochs = -1, tr_batch = -1;
    double tr_lr = -1.0, tr_lambda = -1.0;
    tr->add_option("--benchmark", tr_benchmark, "'ref' or a benchmark spec JSON");
    tr->add_option("--worlds", tr_worlds, "world file or directory");
    tr->add_option("--episodes", tr_episodes, "episodes JSONL");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--batch", tr_batch);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--lambda", tr_lambda, "progress-monitor loss weight");

    // eval
    auto* ev = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    std::string ev_ckpt, ev_benchmark, ev_worlds, ev_episodes, ev_split = "all";
    bool ev_traces = true;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--benchmark", ev_benchmark, "'ref' or a benchmark spec JSON");
    ev->add_option("--worlds", ev_worlds);
    ev->add_option("--episodes", ev_episodes);
    ev->add_option("--split", ev_split, "seen|unseen|all|train")->capture_default_str();
    ev->add_flag("--traces,!--no-traces", ev_traces, "include per-step traces in results");

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and score the M/L/S ablation grid");
    std::string ab_benchmark = "ref", ab_seeds = "7,8,9";
    int ab_epochs = -1;
    ab->add_option("--benchmark", ab_benchmark)->capture_default_str();
    ab->add_option("--seeds", ab_seeds, "comma-separated seeds")->capture_default_str();
    ab->add_option("--epochs", ab_epochs, "override training epochs per run");

    // export-attn
    auto* ex = app.add_subcommand("export-attn", "export a state-attention matrix as CSV");
    std::string ex_results, ex_episode;
    ex->add_option("--results", ex_results, "results JSONL from eval")->required();
    ex->add_option("--episode", ex_episode, "episode id (default: first)");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        eval::set_jobs(jobs);
        RunContext ctx;
        ctx.argv = args;
        ctx.seed = seed;

        Settings s = ref_settings();
        if (!config_path.empty()) {
            ctx.inputs.push_back(config_path);
            apply_json(s, nlohmann::json::parse(read_file(config_path)));
        }
        s.train.seed = seed;
        ctx.resolved_config = settings_json(s);

        if (app.got_subcommand(gw)) {
            ctx.command = "gen-world";
            resolve_out(ctx, out);
            return cmd_gen_world(ctx, gw_count, gw_size);
        }
        if (app.got_subcommand(ge)) {
            ctx.command = "gen-episodes";
            resolve_out(ctx, out);
            world::EpisodeSpec espec{ge_min, ge_max, ge_turn};
            return cmd_gen_episodes(ctx, ge_worlds, ge_per_world, ge_split, espec);
        }
        if (app.got_subcommand(pa)) {
            ctx.command = "parse";
            ctx.out_is_dir = false;
            resolve_out(ctx, out);
            return cmd_parse(ctx, pa_in, pa_lexicon, pa_format);
        }
        if (app.got_subcommand(ep)) {
            ctx.command = "eval-parser";
            ctx.out_is_dir = false;
            resolve_out(ctx, out);
            return cmd_eval_parser(ctx, ep_pred, ep_gold);
        }
        if (app.got_subcommand(tr)) {
            ctx.command = "train";
            resolve_out(ctx, out);
            if (tr_epochs >= 0) s.train.epochs = tr_epochs;
            if (tr_batch > 0) s.train.batch_size = tr_batch;
            if (tr_lr > 0) s.train.lr = tr_lr;
            if (tr_lambda >= 0) s.train.progress_loss_weight = tr_lambda;
            return cmd_train(ctx, s, tr_benchmark, tr_worlds, tr_episodes, tr_resume);
        }
        if (app.got_subcommand(ev)) {
            ctx.command = "eval";
            resolve_out(ctx, out);
            return cmd_eval(ctx, s, ev_ckpt, ev_benchmark, ev_worlds, ev_episodes, ev_split,
                            ev_traces);
        }
        if (app.got_subcommand(ab)) {
            ctx.command = "ablate";
            ctx.out_is_dir = false;
            resolve_out(ctx, out);
            return cmd_ablate(ctx, s, ab_benchmark, ab_seeds, ab_epochs);
        }
        if (app.got_subcommand(ex)) {
            ctx.command = "export-attn";
            ctx.out_is_dir = false;
            resolve_out(ctx, out);
            return cmd_export_attn(ctx, ex_results, ex_episode);
        }
        std::fprintf(stderr, "error: no subcommand\n");
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace spcnav::cli
