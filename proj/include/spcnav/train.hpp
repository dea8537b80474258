#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spcnav/model.hpp"
#include "spcnav/world.hpp"

namespace spcnav::train {

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 16;
    int epochs = 30;
    double progress_loss_weight = 0.5;  // lambda
    // Epoch-linear probability of executing sampled (vs teacher) actions.
    double sample_prob_start = 0.0;
    double sample_prob_end = 0.5;
    std::uint64_t seed = 1;
    void validate() const;
};

// 1 - d(current, goal) / d(start, goal), clipped to [0, 1]; defined as 1
// when start == goal. `dist_to_goal` comes from shortest_paths(world, goal).
double progress_target(const std::vector<double>& dist_to_goal, int current, int start);

// Next action on a shortest path from `current` to the goal: the
// observation group minimizing edge length + remaining distance, or stop
// when already at the goal.
int teacher_action(const world::GraphWorld& w, const world::PanoramaObservation& obs,
                   const std::vector<double>& dist_to_goal, int current, int goal);

struct RolloutLoss {
    Tensor loss;       // mean over steps of CE + lambda * MSE
    int steps = 0;
    int final_viewpoint = -1;
};

// Teacher actions are recomputed from the agent's current position, so a
// strayed sampled rollout is always supervised toward the goal.
RolloutLoss episode_loss(const agent::Model& model, const world::GraphWorld& w,
                         const world::Episode& episode, agent::ActionMode mode, double lambda,
                         std::mt19937_64* sample_rng = nullptr);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double sr_seen = 0.0, sr_unseen = 0.0;
    double spl_seen = 0.0, spl_unseen = 0.0;
    double wall_seconds = 0.0;  // reported separately from the metrics log
};

struct TrainResult {
    std::vector<EpochLog> logs;
    double best_sr_seen = 0.0;
    std::string last_checkpoint;  // empty when out_dir is empty
    std::string best_checkpoint;
};

// Shuffles per epoch with a seed derived from (config.seed, epoch), so a
// resumed run replays the remaining epochs exactly. With a non-empty
// out_dir, writes metrics.jsonl, timing.jsonl, last.ckpt and best.ckpt.
TrainResult train_loop(agent::Model& model, const world::Benchmark& bench,
                       const TrainConfig& cfg, const std::string& out_dir,
                       int start_epoch = 0);

std::string epoch_log_json(const EpochLog& log);

}  // namespace spcnav::train
