#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spcnav/parse.hpp"

namespace spcnav::world {

struct ObjectInstance {
    std::string label;
    double salience = 1.0;
};

// Metric-coordinate viewpoint graph with object-annotated directional
// scenes. Coordinates are meters; edges are 2-4 m. Immutable once built.
struct GraphWorld {
    std::string id;
    std::uint64_t seed = 0;
    std::vector<std::array<double, 2>> coords;       // viewpoint id = index
    std::vector<std::vector<int>> adjacency;         // sorted neighbor ids
    std::map<std::pair<int, int>, std::vector<ObjectInstance>> scenes;  // per directed edge
    std::vector<std::string> object_vocab;

    int size() const { return static_cast<int>(coords.size()); }
    double edge_length(int u, int v) const;
    double heading(int u, int v) const;  // radians, atan2 convention
};

struct ImageObservation {
    int neighbor = -1;      // viewpoint this direction leads to
    double heading = 0.0;
    std::vector<ObjectInstance> objects;  // top-K by salience, descending
    std::uint64_t noise_seed = 0;         // position-derived, not call-count
};

struct PanoramaObservation {
    int viewpoint = -1;
    std::vector<ImageObservation> images;       // sorted by heading
    std::vector<std::vector<int>> kappa;        // group -> image indices (elevations)
    std::vector<int> group_neighbor;            // group -> neighbor viewpoint id
};

struct Episode {
    std::string id;
    std::string world_id;
    std::string instruction;
    parse::GoldAnnotation gold;      // spans over the tokenized instruction
    int start = 0;
    int goal = 0;
    std::vector<int> gold_path;      // shortest path, start..goal inclusive
    std::string split;               // train | val_seen | val_unseen
};

struct ShortestPaths {
    std::vector<double> dist;
    std::vector<int> pred;  // predecessor on a shortest path; -1 at source
};

GraphWorld generate_world(int size, const std::vector<std::string>& vocab, std::uint64_t seed);

// Deterministic observation: one image per navigable neighbor, objects
// truncated to the top-k by salience.
PanoramaObservation observe(const GraphWorld& w, int viewpoint, int top_k = 6);

struct StepResult {
    int viewpoint = -1;
    bool done = false;
};
// `action` indexes the observation's viewpoint groups; group count = stop.
StepResult step_env(const GraphWorld& w, int viewpoint, int action);

ShortestPaths shortest_paths(const GraphWorld& w, int source);
std::vector<int> path_from(const ShortestPaths& sp, int source, int target);
double path_length(const GraphWorld& w, const std::vector<int>& path);

struct EpisodeSpec {
    int min_hops = 2;
    int max_hops = 4;
    double turn_clause_prob = 0.25;
};
Episode generate_episode(const GraphWorld& w, const EpisodeSpec& spec, std::uint64_t seed,
                         const std::string& episode_id, const std::string& split);

// The closed object vocabulary used by the bundled benchmarks.
const std::vector<std::string>& default_object_vocab();

// Fixed per-label appearance vector shared by all worlds (the raw "visual"
// feature space); deterministic in the label string.
std::vector<double> label_appearance(const std::string& label, int dim);

// Raw per-image feature: salience-weighted appearance pool plus seeded
// Gaussian noise (sigma 0.05), with [cos, sin] of the heading appended.
// Output dim = appearance_dim + 2.
std::vector<double> image_feature(const ImageObservation& img, int appearance_dim);

// ---- benchmark ----
struct BenchmarkSpec {
    int train_worlds = 60;
    int unseen_worlds = 20;
    int viewpoints = 30;
    int episodes_per_world = 10;
    int val_seen_per_world = 2;
    int val_unseen_per_world = 10;
    EpisodeSpec episode;
    std::uint64_t seed = 7;
};

struct Benchmark {
    std::vector<GraphWorld> train_worlds;
    std::vector<GraphWorld> unseen_worlds;
    std::vector<Episode> train;
    std::vector<Episode> val_seen;
    std::vector<Episode> val_unseen;
    const GraphWorld& world_of(const Episode& e) const;
};

Benchmark generate_benchmark(const BenchmarkSpec& spec);

// ---- serialization ----
std::string world_to_json(const GraphWorld& w);
GraphWorld world_from_json(const std::string& text);
std::string episode_to_json(const Episode& e);
Episode episode_from_json(const std::string& line);

}  // namespace spcnav::world
