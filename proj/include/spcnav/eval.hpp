#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spcnav/model.hpp"
#include "spcnav/train.hpp"
#include "spcnav/world.hpp"

namespace spcnav::eval {

struct StepTrace {
    std::vector<double> alpha;
    std::vector<double> gamma;
    std::vector<double> image_weights;
    std::vector<double> p;
    std::vector<double> sim;
    double progress = 0.0;
    int action = -1;
};

struct TrajectoryResult {
    std::string episode_id;
    std::vector<int> path;             // visited viewpoints, start included
    double trajectory_length = 0.0;    // meters along the predicted path
    double final_distance = 0.0;       // shortest-path meters to the goal
    double shortest_length = 0.0;      // gold shortest-path length
    bool success = false;
    std::vector<StepTrace> traces;
    std::vector<std::string> config_texts;
};

inline constexpr double kSuccessRadius = 3.0;  // meters

TrajectoryResult run_greedy_episode(const agent::Model& model, const world::GraphWorld& w,
                                    const world::Episode& episode,
                                    double threshold = kSuccessRadius);

std::vector<TrajectoryResult> run_greedy(const agent::Model& model,
                                         const world::Benchmark& bench,
                                         const std::vector<world::Episode>& episodes,
                                         double threshold = kSuccessRadius);

struct Metrics {
    double ne = 0.0;
    double sr = 0.0;
    double spl = 0.0;
    std::size_t count = 0;
};

// NE = mean final distance; SR = fraction within the threshold; SPL = mean
// of S*l/max(p,l). Success is recomputed from final_distance so the same
// results can be scored at different thresholds.
Metrics metrics(const std::vector<TrajectoryResult>& results, double threshold = kSuccessRadius);

struct AblationVariant {
    std::string name;
    bool use_motion = false;
    bool use_landmark = false;
    bool use_similarity = false;
};

// The four standard rows: base, +M, +M+L, +M+L+S.
std::vector<AblationVariant> default_ablation_variants();

struct AblationCell {
    double ne = 0.0, sr = 0.0, spl = 0.0;
};

struct AblationRow {
    std::string variant;
    AblationCell seen;    // means over seeds
    AblationCell unseen;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::vector<std::uint64_t> seeds;
};

// Trains each variant with identical seeds and config; only the M/L/S
// switches differ between rows.
AblationTable run_ablation(const world::Benchmark& bench, const agent::ModelConfig& base,
                           const train::TrainConfig& tcfg,
                           const std::vector<std::uint64_t>& seeds,
                           const std::vector<AblationVariant>& variants = default_ablation_variants());

std::string ablation_to_json(const AblationTable& table);

// steps x m CSV of state-attention rows plus a JSON sidecar with the
// configuration texts.
void export_attention(const TrajectoryResult& result, const std::string& csv_path,
                      const std::string& sidecar_path);

std::string trajectory_to_json(const TrajectoryResult& r, bool include_traces = true);
TrajectoryResult trajectory_from_json(const std::string& line);

// Worker threads used by run_greedy over episodes (default 1).
void set_jobs(int jobs);
int jobs();

}  // namespace spcnav::eval
