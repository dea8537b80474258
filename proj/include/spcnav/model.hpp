#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "spcnav/attention.hpp"
#include "spcnav/parse.hpp"
#include "spcnav/tensor.hpp"
#include "spcnav/world.hpp"

namespace spcnav::agent {

struct ModelConfig {
    int token_emb_dim = 64;
    int hidden_dim = 128;
    int role_emb_dim = 32;    // motion / landmark embedding width
    int object_emb_dim = 32;  // must equal role_emb_dim (shared label table)
    int appearance_dim = 24;  // raw image feature = appearance + [cos, sin]
    int n_max_images = 16;
    int top_k_objects = 6;
    int elevations = 1;
    int max_steps = 10;
    bool use_motion = true;      // M: concatenate motion embedding
    bool use_landmark = true;    // L: concatenate main-landmark embedding
    bool use_similarity = true;  // S: feed similarity scores into the controller

    int image_feat_dim() const { return appearance_dim + 2; }
    int enriched_dim() const {
        return hidden_dim + (use_motion ? role_emb_dim : 0) + (use_landmark ? role_emb_dim : 0);
    }
    int controller_in_dim() const {
        return 2 * hidden_dim + (use_similarity ? n_max_images : 0);
    }
    void validate() const;
};

// Closed token vocabulary shared by the encoder and the label table. Object
// labels map to the same rows as the matching instruction words.
class Vocabulary {
public:
    static Vocabulary build_default(const std::vector<std::string>& object_labels);
    static Vocabulary from_words(std::vector<std::string> words);

    int id(const std::string& word) const;  // unknown -> <unk>
    int size() const { return static_cast<int>(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }
    int unk_id() const { return 0; }
    int delimiter_id() const { return 1; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

struct ConfigBank {
    std::vector<Tensor> enriched;                    // one per configuration
    std::vector<std::vector<Tensor>> landmark_embs;  // label-table rows per config
    std::vector<int> delimiter_pos;                  // stream position per config
    std::vector<std::string> texts;                  // configuration surface text
    int count() const { return static_cast<int>(enriched.size()); }
};

struct AgentState {
    LstmState decoder;
    Tensor alpha;  // distribution over configurations
    int t = 0;
};

struct StepOutput {
    Tensor p;         // distribution over viewpoint groups, then stop (last)
    Tensor progress;  // scalar in (0, 1)
    Tensor gamma;
    Tensor alpha;
    Tensor image_weights;
    Tensor sim;       // undefined when the similarity channel is off
    int n_actions = 0;
    int stop_action() const { return n_actions - 1; }
};

enum class ActionMode { Greedy, Sample, Teacher };

// Greedy breaks ties toward the lowest index; Sample draws from the seeded
// engine; Teacher returns the given action after validating it.
int select_action(const Tensor& p, ActionMode mode, std::mt19937_64* rng = nullptr,
                  int teacher_action = -1);

class Model {
public:
    Model(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed);

    ConfigBank encode(const parse::ParsedInstruction& parsed) const;
    AgentState init_state(const ConfigBank& bank) const;
    std::pair<AgentState, StepOutput> step(const AgentState& state, const ConfigBank& bank,
                                           const world::PanoramaObservation& obs) const;

    const ModelConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    void save(const std::string& path, const std::string& extra_json = "") const;
    static Model load(const std::string& path);
    // Extra run-state JSON stored alongside the hyperparameters, if any.
    static std::string peek_extra(const std::string& path);

private:
    ModelConfig cfg_;
    Vocabulary vocab_;
    ParameterStore params_;

    Tensor tok_emb_, label_emb_;
    LstmParams enc_fwd_, enc_bwd_, dec_;
    Tensor w_attn_config_, w_attn_img_, w_attn_obj_, w_attn_objimg_;
    Tensor w_img_, b_img_;
    Tensor w_gamma_, b_gamma_;
    Tensor w_pred_, b_pred_;
    Tensor w_prog_, b_prog_;
    Tensor stop_logit_;

    Tensor role_embedding_mean(const parse::ParsedInstruction& parsed, int config_index,
                               const parse::Span& stream_span) const;
    Tensor label_row(const std::string& word) const;
};

// Head-noun text of a landmark (minimal tree depth within the span), used
// for the shared landmark/object label embedding.
std::string landmark_head_text(const parse::ParsedInstruction& parsed, int config_index,
                               int landmark_index);

}  // namespace spcnav::agent
