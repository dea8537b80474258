#include "spcnav/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "spcnav/eval.hpp"

namespace spcnav::train {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace

void TrainConfig::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (progress_loss_weight < 0.0)
        throw std::invalid_argument("train config: progress loss weight must be >= 0");
    if (sample_prob_start < 0.0 || sample_prob_start > 1.0 || sample_prob_end < 0.0 ||
        sample_prob_end > 1.0)
        throw std::invalid_argument("train config: sample probabilities must lie in [0, 1]");
}

double progress_target(const std::vector<double>& dist_to_goal, int current, int start) {
    const double total = dist_to_goal[static_cast<std::size_t>(start)];
    if (total <= 0.0) return 1.0;
    const double v = 1.0 - dist_to_goal[static_cast<std::size_t>(current)] / total;
    return std::clamp(v, 0.0, 1.0);
}

int teacher_action(const world::GraphWorld& w, const world::PanoramaObservation& obs,
                   const std::vector<double>& dist_to_goal, int current, int goal) {
    if (current == goal) return static_cast<int>(obs.kappa.size());  // stop
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < obs.group_neighbor.size(); ++g) {
        const int nb = obs.group_neighbor[g];
        const double d = w.edge_length(current, nb) + dist_to_goal[static_cast<std::size_t>(nb)];
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(g);
        }
    }
    if (best < 0) throw std::runtime_error("teacher_action: no navigable neighbor");
    return best;
}

RolloutLoss episode_loss(const agent::Model& model, const world::GraphWorld& w,
                         const world::Episode& episode, agent::ActionMode mode, double lambda,
                         std::mt19937_64* sample_rng) {
    const auto parsed = parse::parse_instruction(episode.instruction, parse::builtin_lexicon());
    const auto bank = model.encode(parsed);
    auto state = model.init_state(bank);
    const auto from_goal = world::shortest_paths(w, episode.goal);

    Tensor total;
    int cur = episode.start;
    int steps = 0;
    const int max_steps = model.config().max_steps;
    for (int t = 0; t < max_steps; ++t) {
        const auto obs = world::observe(w, cur, model.config().top_k_objects);
        auto [next, out] = model.step(state, bank, obs);
        state = std::move(next);

        int teach = teacher_action(w, obs, from_goal.dist, cur, episode.goal);
        if (t == max_steps - 1) teach = out.stop_action();

        Tensor step_loss = cross_entropy(out.p, teach);
        const double target = progress_target(from_goal.dist, cur, episode.start);
        step_loss = add(step_loss,
                        scale(mse(out.progress, Tensor::scalar(target)), lambda));
        total = total.defined() ? add(total, step_loss) : step_loss;
        ++steps;

        const int executed = agent::select_action(out.p, mode, sample_rng, teach);
        if (executed == out.stop_action()) break;
        cur = world::step_env(w, cur, executed).viewpoint;
    }
    RolloutLoss rl;
    rl.loss = scale(total, 1.0 / static_cast<double>(steps));
    rl.steps = steps;
    rl.final_viewpoint = cur;
    return rl;
}

std::string epoch_log_json(const EpochLog& log) {
    nlohmann::json j;
    j["epoch"] = log.epoch;
    j["train_loss"] = log.train_loss;
    j["sr_seen"] = log.sr_seen;
    j["sr_unseen"] = log.sr_unseen;
    j["spl_seen"] = log.spl_seen;
    j["spl_unseen"] = log.spl_unseen;
    return j.dump();
}

TrainResult train_loop(agent::Model& model, const world::Benchmark& bench,
                       const TrainConfig& cfg, const std::string& out_dir, int start_epoch) {
    cfg.validate();
    if (bench.train.empty()) throw std::invalid_argument("train_loop: empty training set");

    namespace fs = std::filesystem;
    std::ofstream metrics_file, timing_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const auto flags = start_epoch > 0 ? std::ios::app : std::ios::trunc;
        metrics_file.open(out_dir + "/metrics.jsonl", flags);
        timing_file.open(out_dir + "/timing.jsonl", flags);
        if (!metrics_file || !timing_file)
            throw std::runtime_error("train_loop: cannot open log files in " + out_dir);
    }

    TrainResult result;
    result.best_sr_seen = -1.0;
    const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 rng(mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(bench.train.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);

        const double frac = cfg.epochs > 1
                                ? static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1)
                                : 0.0;
        const double sample_prob =
            cfg.sample_prob_start + (cfg.sample_prob_end - cfg.sample_prob_start) * frac;

        double loss_sum = 0.0;
        int in_batch = 0;
        model.params().zero_grad();
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        for (std::size_t idx : order) {
            const auto& episode = bench.train[idx];
            const auto& w = bench.world_of(episode);
            const auto mode = coin(rng) < sample_prob ? agent::ActionMode::Sample
                                                      : agent::ActionMode::Teacher;
            {
                Tape tape;
                auto rl = episode_loss(model, w, episode, mode, cfg.progress_loss_weight, &rng);
                loss_sum += rl.loss.item();
                tape.backward(scale(rl.loss, 1.0 / static_cast<double>(cfg.batch_size)));
            }
            if (++in_batch == cfg.batch_size) {
                model.params().adam_step(adam);
                in_batch = 0;
            }
        }
        if (in_batch > 0) model.params().adam_step(adam);

        const auto rs = eval::run_greedy(model, bench, bench.val_seen);
        const auto ru = eval::run_greedy(model, bench, bench.val_unseen);
        const auto ms = eval::metrics(rs);
        const auto mu = eval::metrics(ru);

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(bench.train.size());
        log.sr_seen = ms.sr;
        log.sr_unseen = mu.sr;
        log.spl_seen = ms.spl;
        log.spl_unseen = mu.spl;
        log.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.logs.push_back(log);

        if (!out_dir.empty()) {
            metrics_file << epoch_log_json(log) << '\n';
            metrics_file.flush();
            timing_file << nlohmann::json({{"epoch", epoch}, {"wall_seconds", log.wall_seconds}})
                               .dump()
                        << '\n';
            timing_file.flush();

            nlohmann::json extra;
            extra["epoch"] = epoch + 1;
            extra["seed"] = cfg.seed;
            result.last_checkpoint = out_dir + "/last.ckpt";
            model.save(result.last_checkpoint, extra.dump());
            if (ms.sr > result.best_sr_seen) {
                result.best_checkpoint = out_dir + "/best.ckpt";
                model.save(result.best_checkpoint, extra.dump());
            }
        }
        if (ms.sr > result.best_sr_seen) result.best_sr_seen = ms.sr;
    }
    return result;
}

}  // namespace spcnav::train
