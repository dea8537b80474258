#include "spcnav/world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spcnav::world {

namespace {

constexpr double kArea = 30.0;       // world square, meters
constexpr double kMinEdge = 2.0;
constexpr double kMaxEdge = 4.0;
constexpr double kNoiseSigma = 0.05;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

int zipf_index(std::mt19937_64& rng, int n) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += 1.0 / static_cast<double>(i + 1);
    std::uniform_real_distribution<double> d(0.0, total);
    double u = d(rng);
    for (int i = 0; i < n; ++i) {
        u -= 1.0 / static_cast<double>(i + 1);
        if (u <= 0.0) return i;
    }
    return n - 1;
}

double dist2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1];
    return dx * dx + dy * dy;
}

double uniform_pos(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(5.0, kArea - 5.0);
    return d(rng);
}

}  // namespace

double GraphWorld::edge_length(int u, int v) const {
    return std::sqrt(dist2(coords[static_cast<std::size_t>(u)], coords[static_cast<std::size_t>(v)]));
}

double GraphWorld::heading(int u, int v) const {
    const auto& a = coords[static_cast<std::size_t>(u)];
    const auto& b = coords[static_cast<std::size_t>(v)];
    return std::atan2(b[1] - a[1], b[0] - a[0]);
}

const std::vector<std::string>& default_object_vocab() {
    static const std::vector<std::string> vocab = {
        "table",  "chair",   "sofa",   "couch",  "door",     "window", "lamp",
        "plant",  "stairs",  "counter", "bed",   "desk",     "shelf",  "mirror",
        "rug",    "fridge",  "sink",   "oven",   "painting", "piano",  "fireplace",
        "bench",  "cabinet", "steps",  "ramp",   "vase"};
    return vocab;
}

GraphWorld generate_world(int size, const std::vector<std::string>& vocab, std::uint64_t seed) {
    if (size < 2) throw std::invalid_argument("generate_world: size must be >= 2");
    if (vocab.empty()) throw std::invalid_argument("generate_world: empty object vocabulary");
    GraphWorld w;
    w.seed = seed;
    w.object_vocab = vocab;
    std::mt19937_64 rng(seed);

    w.coords.push_back({uniform_pos(rng), uniform_pos(rng)});
    while (static_cast<int>(w.coords.size()) < size) {
        bool placed = false;
        for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
            const std::size_t anchor =
                static_cast<std::size_t>(rng() % w.coords.size());
            std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
            std::uniform_real_distribution<double> rad(kMinEdge + 0.2, kMaxEdge - 0.2);
            const double a = ang(rng), r = rad(rng);
            std::array<double, 2> c = {w.coords[anchor][0] + r * std::cos(a),
                                       w.coords[anchor][1] + r * std::sin(a)};
            if (c[0] < 0.0 || c[0] > kArea || c[1] < 0.0 || c[1] > kArea) continue;
            bool ok = true;
            for (const auto& p : w.coords)
                if (dist2(p, c) < kMinEdge * kMinEdge) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
            w.coords.push_back(c);
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("generate_world: could not place viewpoint (seed " +
                                     std::to_string(seed) + ")");
    }

    w.adjacency.assign(static_cast<std::size_t>(size), {});
    for (int u = 0; u < size; ++u)
        for (int v = u + 1; v < size; ++v) {
            const double d2 = dist2(w.coords[static_cast<std::size_t>(u)],
                                    w.coords[static_cast<std::size_t>(v)]);
            if (d2 <= kMaxEdge * kMaxEdge) {
                w.adjacency[static_cast<std::size_t>(u)].push_back(v);
                w.adjacency[static_cast<std::size_t>(v)].push_back(u);
            }
        }
    for (auto& nb : w.adjacency) std::sort(nb.begin(), nb.end());

    // One salient "beacon" object per directed edge, with distinct beacon
    // labels across each viewpoint's out-edges, plus low-salience fillers.
    const int nv = static_cast<int>(vocab.size());
    std::uniform_real_distribution<double> beacon_sal(0.8, 1.0);
    std::uniform_real_distribution<double> filler_sal(0.1, 0.5);
    for (int u = 0; u < size; ++u) {
        std::vector<char> used(static_cast<std::size_t>(nv), 0);
        for (int v : w.adjacency[static_cast<std::size_t>(u)]) {
            std::vector<ObjectInstance> objs;
            int label = zipf_index(rng, nv);
            for (int tries = 0; tries < 4 * nv && used[static_cast<std::size_t>(label)]; ++tries)
                label = zipf_index(rng, nv);
            if (used[static_cast<std::size_t>(label)]) {
                for (int i = 0; i < nv; ++i)
                    if (!used[static_cast<std::size_t>(i)]) {
                        label = i;
                        break;
                    }
            }
            used[static_cast<std::size_t>(label)] = 1;
            objs.push_back({vocab[static_cast<std::size_t>(label)], beacon_sal(rng)});
            const int fillers = 1 + static_cast<int>(rng() % 3);
            for (int f = 0; f < fillers; ++f)
                objs.push_back({vocab[static_cast<std::size_t>(zipf_index(rng, nv))],
                                filler_sal(rng)});
            w.scenes[{u, v}] = std::move(objs);
        }
    }
    return w;
}

namespace {

std::vector<int> heading_sorted_neighbors(const GraphWorld& w, int viewpoint) {
    std::vector<int> nbs = w.adjacency[static_cast<std::size_t>(viewpoint)];
    std::stable_sort(nbs.begin(), nbs.end(), [&](int a, int b) {
        const double ha = w.heading(viewpoint, a), hb = w.heading(viewpoint, b);
        if (ha != hb) return ha < hb;
        return a < b;
    });
    return nbs;
}

}  // namespace

PanoramaObservation observe(const GraphWorld& w, int viewpoint, int top_k) {
    if (viewpoint < 0 || viewpoint >= w.size())
        throw std::out_of_range("observe: unknown viewpoint " + std::to_string(viewpoint));
    PanoramaObservation obs;
    obs.viewpoint = viewpoint;
    const auto nbs = heading_sorted_neighbors(w, viewpoint);
    for (std::size_t i = 0; i < nbs.size(); ++i) {
        const int v = nbs[i];
        ImageObservation img;
        img.neighbor = v;
        img.heading = w.heading(viewpoint, v);
        auto it = w.scenes.find({viewpoint, v});
        if (it != w.scenes.end()) {
            std::vector<ObjectInstance> objs = it->second;
            std::stable_sort(objs.begin(), objs.end(), [](const auto& a, const auto& b) {
                if (a.salience != b.salience) return a.salience > b.salience;
                return a.label < b.label;
            });
            if (static_cast<int>(objs.size()) > top_k) objs.resize(static_cast<std::size_t>(top_k));
            img.objects = std::move(objs);
        }
        img.noise_seed = mix(mix(w.seed, static_cast<std::uint64_t>(viewpoint) + 1),
                             static_cast<std::uint64_t>(v) + 1);
        obs.images.push_back(std::move(img));
        obs.kappa.push_back({static_cast<int>(i)});
        obs.group_neighbor.push_back(v);
    }
    return obs;
}

StepResult step_env(const GraphWorld& w, int viewpoint, int action) {
    const auto nbs = heading_sorted_neighbors(w, viewpoint);
    const int n = static_cast<int>(nbs.size());
    if (action < 0 || action > n)
        throw std::out_of_range("step_env: invalid action " + std::to_string(action));
    if (action == n) return {viewpoint, true};  // stop
    return {nbs[static_cast<std::size_t>(action)], false};
}

ShortestPaths shortest_paths(const GraphWorld& w, int source) {
    const int n = w.size();
    ShortestPaths sp;
    sp.dist.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    sp.pred.assign(static_cast<std::size_t>(n), -1);
    sp.dist[static_cast<std::size_t>(source)] = 0.0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> q;
    q.push({0.0, source});
    while (!q.empty()) {
        const auto [d, u] = q.top();
        q.pop();
        if (d > sp.dist[static_cast<std::size_t>(u)]) continue;
        for (int v : w.adjacency[static_cast<std::size_t>(u)]) {
            const double nd = d + w.edge_length(u, v);
            if (nd < sp.dist[static_cast<std::size_t>(v)]) {
                sp.dist[static_cast<std::size_t>(v)] = nd;
                sp.pred[static_cast<std::size_t>(v)] = u;
                q.push({nd, v});
            }
        }
    }
    return sp;
}

std::vector<int> path_from(const ShortestPaths& sp, int source, int target) {
    std::vector<int> path;
    int cur = target;
    while (cur != -1 && cur != source) {
        path.push_back(cur);
        cur = sp.pred[static_cast<std::size_t>(cur)];
    }
    if (cur != source) throw std::runtime_error("path_from: target unreachable");
    path.push_back(source);
    std::reverse(path.begin(), path.end());
    return path;
}

double path_length(const GraphWorld& w, const std::vector<int>& path) {
    double sum = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) sum += w.edge_length(path[i - 1], path[i]);
    return sum;
}

namespace {

struct ClauseTokens {
    std::vector<std::string> tokens;
    parse::GoldConfiguration gold;  // spans local to the clause
};

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

const ObjectInstance& beacon_of(const GraphWorld& w, int u, int v) {
    const auto& objs = w.scenes.at({u, v});
    std::size_t best = 0;
    for (std::size_t i = 1; i < objs.size(); ++i)
        if (objs[i].salience > objs[best].salience) best = i;
    return objs[best];
}

double angle_diff(double a, double b) {
    double d = a - b;
    while (d > M_PI) d -= 2.0 * M_PI;
    while (d < -M_PI) d += 2.0 * M_PI;
    return d;
}

}  // namespace

Episode generate_episode(const GraphWorld& w, const EpisodeSpec& spec, std::uint64_t seed,
                         const std::string& episode_id, const std::string& split) {
    std::mt19937_64 rng(seed);
    const int n = w.size();

    int start = -1, goal = -1;
    std::vector<int> gold_path;
    for (int attempt = 0; attempt < 8 * n && goal < 0; ++attempt) {
        const int s = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
        const auto sp = shortest_paths(w, s);
        std::vector<int> candidates;
        for (int t = 0; t < n; ++t) {
            if (t == s || !std::isfinite(sp.dist[static_cast<std::size_t>(t)])) continue;
            const int hops = static_cast<int>(path_from(sp, s, t).size()) - 1;
            if (hops >= spec.min_hops && hops <= spec.max_hops) candidates.push_back(t);
        }
        if (candidates.empty()) continue;
        start = s;
        goal = candidates[static_cast<std::size_t>(rng() % candidates.size())];
        gold_path = path_from(sp, s, goal);
    }
    if (goal < 0)
        throw std::runtime_error("generate_episode: no path in the requested hop range");

    // One clause per path segment, optionally preceded by a geometric turn
    // clause joined in the same sentence; final sentence is "Stop."
    std::vector<std::string> tokens;
    std::vector<parse::GoldConfiguration> configs;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    bool have_prev_heading = false;
    double prev_heading = 0.0;

    auto emit_sentence = [&](std::vector<ClauseTokens> clauses) {
        const int base = static_cast<int>(tokens.size());
        int off = base;
        for (std::size_t i = 0; i < clauses.size(); ++i) {
            auto& c = clauses[i];
            std::vector<std::string> words = c.tokens;
            if (i + 1 < clauses.size()) {
                words.push_back(",");
                words.push_back("and");
            } else {
                words.push_back(".");
            }
            parse::GoldConfiguration g = c.gold;
            g.span = parse::Span{off, off + static_cast<int>(words.size())};
            if (g.motion)
                g.motion = parse::Span{g.motion->start + off, g.motion->end + off};
            for (auto& lm : g.landmarks) lm = parse::Span{lm.start + off, lm.end + off};
            configs.push_back(std::move(g));
            if (off == base && !words.empty()) words[0] = capitalize(words[0]);
            for (auto& t : words) tokens.push_back(t);
            off += static_cast<int>(words.size());
        }
    };

    for (std::size_t h = 1; h < gold_path.size(); ++h) {
        const int u = gold_path[h - 1];
        const int v = gold_path[h];
        const double heading = w.heading(u, v);
        std::vector<ClauseTokens> clauses;
        if (have_prev_heading && coin(rng) < spec.turn_clause_prob) {
            const double rel = angle_diff(heading, prev_heading);
            const double deg = rel * 180.0 / M_PI;
            if (deg > 30.0 && deg < 150.0) {
                ClauseTokens turn;
                turn.tokens = {"turn", "left"};
                turn.gold.motion = parse::Span{0, 2};
                clauses.push_back(std::move(turn));
            } else if (deg < -30.0 && deg > -150.0) {
                ClauseTokens turn;
                turn.tokens = {"turn", "right"};
                turn.gold.motion = parse::Span{0, 2};
                clauses.push_back(std::move(turn));
            }
        }
        const std::string label = beacon_of(w, u, v).label;
        ClauseTokens move;
        const bool climbable = label == "stairs" || label == "steps" || label == "ramp";
        if (climbable && coin(rng) < 0.5) {
            const char* dir = coin(rng) < 0.5 ? "up" : "down";
            move.tokens = {"go", dir, "the", label};
        } else {
            static const char* preps[] = {"past", "to", "towards", "through"};
            move.tokens = {"walk", preps[rng() % 4], "the", label};
        }
        move.gold.motion = parse::Span{0, 2};
        move.gold.landmarks = {parse::Span{2, 4}};
        move.gold.main_landmark = 0;
        clauses.push_back(std::move(move));
        emit_sentence(std::move(clauses));
        have_prev_heading = true;
        prev_heading = heading;
    }
    {
        ClauseTokens stop;
        stop.tokens = {"stop"};
        stop.gold.motion = parse::Span{0, 1};
        emit_sentence({std::move(stop)});
    }

    std::string text;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& t = tokens[i];
        const bool punct = t == "," || t == "." || t == "!" || t == "?";
        if (i > 0 && !punct) text += ' ';
        text += t;
    }

    Episode e;
    e.id = episode_id;
    e.world_id = w.id;
    e.instruction = text;
    e.gold.instruction_id = episode_id;
    e.gold.configurations = std::move(configs);
    e.start = start;
    e.goal = goal;
    e.gold_path = std::move(gold_path);
    e.split = split;
    return e;
}

std::vector<double> label_appearance(const std::string& label, int dim) {
    std::mt19937_64 rng(mix(fnv1a(label), 0x5eedULL));
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (auto& v : out) v = d(rng);
    return out;
}

std::vector<double> image_feature(const ImageObservation& img, int appearance_dim) {
    std::vector<double> pooled(static_cast<std::size_t>(appearance_dim), 0.0);
    double total = 0.0;
    for (const auto& o : img.objects) {
        const auto app = label_appearance(o.label, appearance_dim);
        for (int i = 0; i < appearance_dim; ++i) pooled[static_cast<std::size_t>(i)] += o.salience * app[static_cast<std::size_t>(i)];
        total += o.salience;
    }
    if (total > 0.0)
        for (auto& v : pooled) v /= total;
    std::mt19937_64 rng(img.noise_seed);
    std::normal_distribution<double> noise(0.0, kNoiseSigma);
    for (auto& v : pooled) v += noise(rng);
    pooled.push_back(std::cos(img.heading));
    pooled.push_back(std::sin(img.heading));
    return pooled;
}

const GraphWorld& Benchmark::world_of(const Episode& e) const {
    for (const auto& w : train_worlds)
        if (w.id == e.world_id) return w;
    for (const auto& w : unseen_worlds)
        if (w.id == e.world_id) return w;
    throw std::out_of_range("benchmark: unknown world " + e.world_id);
}

Benchmark generate_benchmark(const BenchmarkSpec& spec) {
    Benchmark b;
    const auto& vocab = default_object_vocab();
    char idbuf[64];
    for (int i = 0; i < spec.train_worlds; ++i) {
        GraphWorld w = generate_world(spec.viewpoints, vocab, mix(spec.seed, 1000 + static_cast<std::uint64_t>(i)));
        std::snprintf(idbuf, sizeof(idbuf), "train_%03d", i);
        w.id = idbuf;
        b.train_worlds.push_back(std::move(w));
    }
    for (int i = 0; i < spec.unseen_worlds; ++i) {
        GraphWorld w = generate_world(spec.viewpoints, vocab, mix(spec.seed, 5000 + static_cast<std::uint64_t>(i)));
        std::snprintf(idbuf, sizeof(idbuf), "unseen_%03d", i);
        w.id = idbuf;
        b.unseen_worlds.push_back(std::move(w));
    }
    for (int i = 0; i < spec.train_worlds; ++i) {
        const auto& w = b.train_worlds[static_cast<std::size_t>(i)];
        for (int k = 0; k < spec.episodes_per_world; ++k) {
            std::snprintf(idbuf, sizeof(idbuf), "%s_train_%03d", w.id.c_str(), k);
            b.train.push_back(generate_episode(
                w, spec.episode, mix(w.seed, 40000 + static_cast<std::uint64_t>(k)), idbuf, "train"));
        }
        for (int k = 0; k < spec.val_seen_per_world; ++k) {
            std::snprintf(idbuf, sizeof(idbuf), "%s_valseen_%03d", w.id.c_str(), k);
            b.val_seen.push_back(generate_episode(
                w, spec.episode, mix(w.seed, 80000 + static_cast<std::uint64_t>(k)), idbuf,
                "val_seen"));
        }
    }
    for (int i = 0; i < spec.unseen_worlds; ++i) {
        const auto& w = b.unseen_worlds[static_cast<std::size_t>(i)];
        for (int k = 0; k < spec.val_unseen_per_world; ++k) {
            std::snprintf(idbuf, sizeof(idbuf), "%s_valunseen_%03d", w.id.c_str(), k);
            b.val_unseen.push_back(generate_episode(
                w, spec.episode, mix(w.seed, 120000 + static_cast<std::uint64_t>(k)), idbuf,
                "val_unseen"));
        }
    }
    return b;
}

std::string world_to_json(const GraphWorld& w) {
    nlohmann::json j;
    j["version"] = 1;
    j["id"] = w.id;
    j["seed"] = w.seed;
    nlohmann::json vps = nlohmann::json::array();
    for (std::size_t i = 0; i < w.coords.size(); ++i)
        vps.push_back({{"id", i}, {"x", w.coords[i][0]}, {"y", w.coords[i][1]}});
    j["viewpoints"] = vps;
    nlohmann::json edges = nlohmann::json::array();
    for (int u = 0; u < w.size(); ++u)
        for (int v : w.adjacency[static_cast<std::size_t>(u)])
            if (u < v) edges.push_back({u, v});
    j["edges"] = edges;
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& [key, objs] : w.scenes) {
        nlohmann::json js;
        js["from"] = key.first;
        js["to"] = key.second;
        nlohmann::json jo = nlohmann::json::array();
        for (const auto& o : objs) jo.push_back({{"label", o.label}, {"salience", o.salience}});
        js["objects"] = jo;
        scenes.push_back(js);
    }
    j["scenes"] = scenes;
    j["object_vocab"] = w.object_vocab;
    return j.dump(2);
}

GraphWorld world_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error("world file: unsupported version");
    GraphWorld w;
    w.id = j.at("id").get<std::string>();
    w.seed = j.at("seed").get<std::uint64_t>();
    const auto& vps = j.at("viewpoints");
    w.coords.resize(vps.size());
    for (const auto& vp : vps) {
        const auto id = vp.at("id").get<std::size_t>();
        w.coords.at(id) = {vp.at("x").get<double>(), vp.at("y").get<double>()};
    }
    w.adjacency.assign(w.coords.size(), {});
    for (const auto& e : j.at("edges")) {
        const int u = e.at(0).get<int>(), v = e.at(1).get<int>();
        w.adjacency[static_cast<std::size_t>(u)].push_back(v);
        w.adjacency[static_cast<std::size_t>(v)].push_back(u);
    }
    for (auto& nb : w.adjacency) std::sort(nb.begin(), nb.end());
    for (const auto& s : j.at("scenes")) {
        std::vector<ObjectInstance> objs;
        for (const auto& o : s.at("objects"))
            objs.push_back({o.at("label").get<std::string>(), o.at("salience").get<double>()});
        w.scenes[{s.at("from").get<int>(), s.at("to").get<int>()}] = std::move(objs);
    }
    w.object_vocab = j.at("object_vocab").get<std::vector<std::string>>();
    return w;
}

std::string episode_to_json(const Episode& e) {
    nlohmann::json j;
    j["id"] = e.id;
    j["world_id"] = e.world_id;
    j["instruction"] = e.instruction;
    j["gold"] = nlohmann::json::parse(parse::annotation_to_json(e.gold));
    j["start"] = e.start;
    j["goal"] = e.goal;
    j["gold_path"] = e.gold_path;
    j["split"] = e.split;
    return j.dump();
}

Episode episode_from_json(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    Episode e;
    e.id = j.at("id").get<std::string>();
    e.world_id = j.at("world_id").get<std::string>();
    e.instruction = j.at("instruction").get<std::string>();
    e.gold = parse::annotation_from_json(j.at("gold").dump());
    e.start = j.at("start").get<int>();
    e.goal = j.at("goal").get<int>();
    e.gold_path = j.at("gold_path").get<std::vector<int>>();
    e.split = j.at("split").get<std::string>();
    return e;
}

}  // namespace spcnav::world
