#include "spcnav/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace spcnav::agent {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

void ModelConfig::validate() const {
    if (token_emb_dim <= 0 || hidden_dim <= 0 || role_emb_dim <= 0 || object_emb_dim <= 0 ||
        appearance_dim <= 0 || n_max_images <= 0 || top_k_objects <= 0 || elevations <= 0 ||
        max_steps <= 0)
        throw std::invalid_argument("model config: dimensions must be positive");
    if (role_emb_dim != object_emb_dim)
        throw std::invalid_argument(
            "model config: role_emb_dim must equal object_emb_dim (shared label table)");
}

Vocabulary Vocabulary::build_default(const std::vector<std::string>& object_labels) {
    std::vector<std::string> words = {
        "<unk>", "<cfg>",
        // function words
        "the", "a", "an", "this", "that", "these", "those", "and", "or", "but",
        "then", "once", "when", "after", "before", "until", "while", "if", "as",
        "you", "it", "your", "there", "is", "are", "was", "were", "be", "will",
        // prepositions and particles
        "to", "into", "in", "on", "at", "of", "from", "with", "through", "past",
        "towards", "toward", "up", "down", "around", "inside", "outside", "over",
        "under", "across", "along", "onto", "by", "near", "behind", "beyond",
        "between", "above", "below", "off", "out",
        // verbs
        "walk", "go", "move", "turn", "head", "stop", "continue", "proceed",
        "take", "make", "jump", "climb", "enter", "exit", "pass", "keep",
        "stand", "wait", "face", "follow", "cross", "leave", "step", "reach",
        // modifiers
        "left", "right", "straight", "forward", "ahead", "slightly", "red",
        "blue", "green", "white", "black", "brown", "wooden", "glass", "small",
        "large", "big", "old", "new", "first", "second", "last", "next",
        "dining", "dinning", "living", "rocking", "room", "middle", "doorway",
        "end", "top", "bottom", "hall", "hallway", "kitchen", "bathroom",
        // punctuation
        ",", ".", "!", "?",
    };
    for (const auto& l : object_labels) words.push_back(lower(l));
    return from_words(std::move(words));
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
    Vocabulary v;
    for (auto& w : words) {
        if (v.index_.count(w)) continue;
        v.index_[w] = static_cast<int>(v.words_.size());
        v.words_.push_back(w);
    }
    if (v.words_.empty() || v.words_[0] != "<unk>" || v.words_.size() < 2 || v.words_[1] != "<cfg>")
        throw std::invalid_argument("vocabulary must start with <unk>, <cfg>");
    return v;
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(lower(word));
    return it == index_.end() ? unk_id() : it->second;
}

namespace {

LstmParams make_lstm(ParameterStore& store, const std::string& prefix, int input, int hidden,
                     std::mt19937_64& rng) {
    LstmParams p;
    p.hidden = hidden;
    p.w_input = store.add_matrix(prefix + ".w_x", 4 * hidden, input, rng);
    p.w_hidden = store.add_matrix(prefix + ".w_h", 4 * hidden, hidden, rng);
    std::vector<double> bias(static_cast<std::size_t>(4 * hidden), 0.0);
    for (int i = hidden; i < 2 * hidden; ++i) bias[static_cast<std::size_t>(i)] = 1.0;  // forget gate
    p.bias = store.add(prefix + ".b", std::move(bias), {4 * hidden});
    return p;
}

}  // namespace

Model::Model(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const int v = vocab_.size();
    const int h = cfg_.hidden_dim;
    const int e = cfg_.enriched_dim();
    tok_emb_ = params_.add_matrix("tok_emb", v, cfg_.token_emb_dim, rng);
    label_emb_ = params_.add_matrix("label_emb", v, cfg_.role_emb_dim, rng);
    enc_fwd_ = make_lstm(params_, "enc_fwd", cfg_.token_emb_dim, h, rng);
    enc_bwd_ = make_lstm(params_, "enc_bwd", cfg_.token_emb_dim, h, rng);
    w_attn_config_ = params_.add_matrix("attn_config.w", h, h, rng);
    w_img_ = params_.add_matrix("img.w", h, cfg_.image_feat_dim(), rng);
    b_img_ = params_.add_vector_zeros("img.b", h);
    w_attn_img_ = params_.add_matrix("attn_img.w", h, h, rng);
    w_attn_obj_ = params_.add_matrix("attn_obj.w", cfg_.role_emb_dim, e, rng);
    w_attn_objimg_ = params_.add_matrix("attn_objimg.w", cfg_.role_emb_dim, h, rng);
    w_gamma_ = params_.add_matrix("gamma.w", 2, cfg_.controller_in_dim(), rng);
    b_gamma_ = params_.add_vector_zeros("gamma.b", 2);
    dec_ = make_lstm(params_, "dec", e + h, h, rng);
    w_pred_ = params_.add_matrix("pred.w", h, e + h, rng);
    b_pred_ = params_.add_vector_zeros("pred.b", h);
    w_prog_ = params_.add_matrix("prog.w", 1, e + h, rng);
    b_prog_ = params_.add_vector_zeros("prog.b", 1);
    stop_logit_ = params_.add("stop_logit", {0.0}, {1});
}

std::string landmark_head_text(const parse::ParsedInstruction& parsed, int config_index,
                               int landmark_index) {
    const auto& cfg = parsed.configurations[static_cast<std::size_t>(config_index)];
    const parse::Span raw =
        parsed.to_raw(cfg.landmarks[static_cast<std::size_t>(landmark_index)], config_index);
    // Locate the sentence that holds this raw span.
    int offset = 0;
    for (const auto& sent : parsed.sentences) {
        const int n = static_cast<int>(sent.size());
        if (raw.start >= offset && raw.start < offset + n) {
            int best = -1, best_depth = 1 << 30;
            const int lo = raw.start - offset;
            const int hi = std::min(raw.end - offset, n);
            for (int k = lo; k < hi; ++k) {
                if (sent[static_cast<std::size_t>(k)].pos != parse::Pos::Noun) continue;
                const int d = parse::tree_depth(sent, k);
                if (d < best_depth) {
                    best_depth = d;
                    best = k;
                }
            }
            if (best >= 0) return lower(sent[static_cast<std::size_t>(best)].text);
            return lower(sent[static_cast<std::size_t>(lo)].text);
        }
        offset += n;
    }
    throw std::out_of_range("landmark_head_text: span outside instruction");
}

Tensor Model::label_row(const std::string& word) const {
    return embedding_row(label_emb_, vocab_.id(word));
}

Tensor Model::role_embedding_mean(const parse::ParsedInstruction& parsed, int /*config_index*/,
                                  const parse::Span& stream_span) const {
    std::vector<Tensor> rows;
    for (int i = stream_span.start; i < stream_span.end; ++i)
        rows.push_back(label_row(parsed.token_stream[static_cast<std::size_t>(i)].text));
    if (rows.empty()) return Tensor::zeros({cfg_.role_emb_dim});
    Tensor sum = rows[0];
    for (std::size_t i = 1; i < rows.size(); ++i) sum = add(sum, rows[i]);
    return rows.size() == 1 ? sum : scale(sum, 1.0 / static_cast<double>(rows.size()));
}

ConfigBank Model::encode(const parse::ParsedInstruction& parsed) const {
    if (parsed.configurations.empty())
        throw std::invalid_argument("encode: instruction has no configurations");
    const auto& stream = parsed.token_stream;
    const int n = static_cast<int>(stream.size());

    std::vector<Tensor> embs;
    embs.reserve(static_cast<std::size_t>(n));
    for (const auto& tok : stream) {
        const int id = tok.pos == parse::Pos::Delim ? vocab_.delimiter_id() : vocab_.id(tok.text);
        embs.push_back(embedding_row(tok_emb_, id));
    }

    // Bidirectional encoder with summed directions.
    const int h = cfg_.hidden_dim;
    std::vector<Tensor> ctx(static_cast<std::size_t>(n));
    LstmState st{Tensor::zeros({h}), Tensor::zeros({h})};
    for (int i = 0; i < n; ++i) {
        st = lstm_cell(enc_fwd_, embs[static_cast<std::size_t>(i)], st);
        ctx[static_cast<std::size_t>(i)] = st.h;
    }
    st = {Tensor::zeros({h}), Tensor::zeros({h})};
    for (int i = n - 1; i >= 0; --i) {
        st = lstm_cell(enc_bwd_, embs[static_cast<std::size_t>(i)], st);
        ctx[static_cast<std::size_t>(i)] = add(ctx[static_cast<std::size_t>(i)], st.h);
    }

    ConfigBank bank;
    for (std::size_t ci = 0; ci < parsed.configurations.size(); ++ci) {
        const auto& c = parsed.configurations[ci];
        std::vector<Tensor> tokens;
        for (int i = c.tokens.start; i <= c.delimiter_pos; ++i)
            tokens.push_back(ctx[static_cast<std::size_t>(i)]);
        Tensor summary = attn::config_repr(tokens, w_attn_config_).vector;

        std::vector<Tensor> parts = {summary};
        if (cfg_.use_motion) {
            parts.push_back(c.motion_indicator
                                ? role_embedding_mean(parsed, static_cast<int>(ci),
                                                      *c.motion_indicator)
                                : Tensor::zeros({cfg_.role_emb_dim}));
        }
        if (cfg_.use_landmark) {
            parts.push_back(c.main_landmark
                                ? label_row(landmark_head_text(parsed, static_cast<int>(ci),
                                                               *c.main_landmark))
                                : Tensor::zeros({cfg_.role_emb_dim}));
        }
        bank.enriched.push_back(parts.size() == 1 ? parts[0] : concat(parts));

        std::vector<Tensor> lms;
        for (std::size_t li = 0; li < c.landmarks.size(); ++li)
            lms.push_back(label_row(
                landmark_head_text(parsed, static_cast<int>(ci), static_cast<int>(li))));
        bank.landmark_embs.push_back(std::move(lms));
        bank.delimiter_pos.push_back(c.delimiter_pos);

        std::string text;
        for (int i = c.tokens.start; i < c.tokens.end; ++i) {
            if (!text.empty()) text += ' ';
            text += lower(stream[static_cast<std::size_t>(i)].text);
        }
        bank.texts.push_back(std::move(text));
    }
    return bank;
}

AgentState Model::init_state(const ConfigBank& bank) const {
    if (bank.count() < 1) throw std::invalid_argument("init_state: empty configuration bank");
    std::vector<double> a(static_cast<std::size_t>(bank.count()), 0.0);
    a[0] = 1.0;
    AgentState s;
    s.decoder = {Tensor::zeros({cfg_.hidden_dim}), Tensor::zeros({cfg_.hidden_dim})};
    s.alpha = Tensor::from(std::move(a), {bank.count()});
    s.t = 0;
    return s;
}

std::pair<AgentState, StepOutput> Model::step(const AgentState& state, const ConfigBank& bank,
                                              const world::PanoramaObservation& obs) const {
    const int n = static_cast<int>(obs.images.size());
    if (n == 0) throw std::invalid_argument("step: observation has no navigable images");
    if (n > cfg_.n_max_images)
        throw std::invalid_argument("step: more images than n_max_images");

    // (1) project raw image features
    std::vector<Tensor> projected;
    projected.reserve(static_cast<std::size_t>(n));
    for (const auto& img : obs.images) {
        Tensor raw = Tensor::from(world::image_feature(img, cfg_.appearance_dim),
                                  {cfg_.image_feat_dim()});
        projected.push_back(relu(add(matvec(w_img_, raw), b_img_)));
    }

    // (2) attended image
    attn::Attended img_att = attn::image_attn(state.decoder.h, projected, w_attn_img_);

    // object label representations, shared with the language side
    std::vector<std::vector<Tensor>> object_embs(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        for (const auto& o : obs.images[static_cast<std::size_t>(j)].objects)
            object_embs[static_cast<std::size_t>(j)].push_back(label_row(o.label));

    // (3) landmark/object similarity (controller channel)
    Tensor sim;
    if (cfg_.use_similarity)
        sim = attn::similarity_scores(state.alpha, bank.landmark_embs, object_embs,
                                      cfg_.n_max_images);

    // (4) controller, (5) state attention advance
    Tensor gamma = attn::predict_controller(state.decoder.h, img_att.vector, sim, w_gamma_, b_gamma_);
    Tensor alpha = attn::state_attn_update(state.alpha, gamma);

    // (6) grounded instruction
    Tensor grounded = attn::grounded_instruction(alpha, bank.enriched);

    // (7) object-aligned visual input
    attn::ObjectAligned aligned = attn::object_align(grounded, object_embs, state.decoder.h,
                                                     projected, w_attn_obj_, w_attn_objimg_);

    // (8) decoder update
    LstmState dec = lstm_cell(dec_, concat({grounded, aligned.vector}), state.decoder);

    // (9) per-image scores, grouped per viewpoint over elevations
    Tensor ctx = concat({grounded, dec.h});
    Tensor pred = add(matvec(w_pred_, ctx), b_pred_);
    std::vector<Tensor> z;
    z.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) z.push_back(dot(projected[static_cast<std::size_t>(j)], pred));
    std::vector<Tensor> logits;
    for (const auto& group : obs.kappa) {
        if (group.empty()) throw std::invalid_argument("step: empty elevation group");
        Tensor zeta = z[static_cast<std::size_t>(group[0])];
        for (std::size_t gi = 1; gi < group.size(); ++gi)
            zeta = add(zeta, z[static_cast<std::size_t>(group[gi])]);
        logits.push_back(zeta);
    }
    logits.push_back(stop_logit_);

    // (10) action distribution with the learned stop logit appended
    StepOutput out;
    out.p = masked_softmax(concat(logits));
    out.progress = sigmoid(add(matvec(w_prog_, ctx), b_prog_));
    out.gamma = gamma;
    out.alpha = alpha;
    out.image_weights = img_att.weights;
    out.sim = sim;
    out.n_actions = static_cast<int>(obs.kappa.size()) + 1;

    AgentState next;
    next.decoder = dec;
    next.alpha = alpha;
    next.t = state.t + 1;
    return {std::move(next), std::move(out)};
}

int select_action(const Tensor& p, ActionMode mode, std::mt19937_64* rng, int teacher_action) {
    const int n = p.dim(0);
    switch (mode) {
        case ActionMode::Greedy: {
            int best = 0;
            for (int i = 1; i < n; ++i)
                if (p.data()[static_cast<std::size_t>(i)] > p.data()[static_cast<std::size_t>(best)])
                    best = i;
            return best;
        }
        case ActionMode::Sample: {
            if (!rng) throw std::invalid_argument("select_action: sampling needs an RNG");
            std::uniform_real_distribution<double> d(0.0, 1.0);
            const double u = d(*rng);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += p.data()[static_cast<std::size_t>(i)];
                if (u < acc) return i;
            }
            return n - 1;
        }
        case ActionMode::Teacher:
            if (teacher_action < 0 || teacher_action >= n)
                throw std::out_of_range("select_action: teacher action not in the navigable set");
            return teacher_action;
    }
    throw std::logic_error("select_action: bad mode");
}

namespace {

nlohmann::json config_json(const ModelConfig& c) {
    return {{"token_emb_dim", c.token_emb_dim},
            {"hidden_dim", c.hidden_dim},
            {"role_emb_dim", c.role_emb_dim},
            {"object_emb_dim", c.object_emb_dim},
            {"appearance_dim", c.appearance_dim},
            {"n_max_images", c.n_max_images},
            {"top_k_objects", c.top_k_objects},
            {"elevations", c.elevations},
            {"max_steps", c.max_steps},
            {"use_motion", c.use_motion},
            {"use_landmark", c.use_landmark},
            {"use_similarity", c.use_similarity}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.token_emb_dim = j.at("token_emb_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.role_emb_dim = j.at("role_emb_dim").get<int>();
    c.object_emb_dim = j.at("object_emb_dim").get<int>();
    c.appearance_dim = j.at("appearance_dim").get<int>();
    c.n_max_images = j.at("n_max_images").get<int>();
    c.top_k_objects = j.at("top_k_objects").get<int>();
    c.elevations = j.at("elevations").get<int>();
    c.max_steps = j.at("max_steps").get<int>();
    c.use_motion = j.at("use_motion").get<bool>();
    c.use_landmark = j.at("use_landmark").get<bool>();
    c.use_similarity = j.at("use_similarity").get<bool>();
    return c;
}

}  // namespace

void Model::save(const std::string& path, const std::string& extra_json) const {
    nlohmann::json hyper;
    hyper["model"] = config_json(cfg_);
    hyper["vocab"] = vocab_.words();
    hyper["extra"] = extra_json.empty() ? nlohmann::json::object()
                                        : nlohmann::json::parse(extra_json);
    Checkpoint ck;
    ck.hyper_json = hyper.dump();
    ck.save(path, params_);
}

Model Model::load(const std::string& path) {
    const auto hyper = nlohmann::json::parse(Checkpoint::peek_hyper(path));
    ModelConfig cfg = config_from_json(hyper.at("model"));
    Vocabulary vocab = Vocabulary::from_words(hyper.at("vocab").get<std::vector<std::string>>());
    Model m(cfg, std::move(vocab), 0);
    Checkpoint::load(path, m.params_);
    return m;
}

std::string Model::peek_extra(const std::string& path) {
    const auto hyper = nlohmann::json::parse(Checkpoint::peek_hyper(path));
    return hyper.at("extra").dump();
}

}  // namespace spcnav::agent
