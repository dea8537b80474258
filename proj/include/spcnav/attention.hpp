#pragma once

#include <span>
#include <vector>

#include "spcnav/tensor.hpp"

namespace spcnav::attn {

struct Attended {
    Tensor vector;
    Tensor weights;
};

// Scaled bilinear soft attention: weights = softmax(q' W k / sqrt(d_k)),
// output = sum weights * values. The site parameter is stored as [d_k, d_q]
// so the score of key j is dot(W q, k_j).
Attended soft_attn(const Tensor& query, const std::vector<Tensor>& keys,
                   const std::vector<Tensor>& values, const Tensor& w,
                   std::span<const char> invalid = {});

// Summarizes one configuration: query is the trailing pseudo-delimiter
// embedding, keys/values are the configuration's contextual embeddings
// (delimiter included as the last element).
Attended config_repr(const std::vector<Tensor>& tokens_with_delim, const Tensor& w);

Attended image_attn(const Tensor& h_prev, const std::vector<Tensor>& projected_images,
                    const Tensor& w, std::span<const char> invalid = {});

// Advances the configuration-progress distribution by discrete convolution
// with the 2-way controller [stay, advance]. Mass that would advance past
// the final configuration is retained there, so the output stays a
// distribution without renormalizing.
Tensor state_attn_update(const Tensor& alpha_prev, const Tensor& gamma);

// Per-image landmark/object match score:
//   s_j = sum_i alpha_prev[i] * max over (landmark l of config i, object k
//         of image j) of cosine(landmark_emb, object_emb).
// Configurations without landmarks contribute 0; output has fixed length
// n_max with zero padding past the valid images.
Tensor similarity_scores(const Tensor& alpha_prev,
                         const std::vector<std::vector<Tensor>>& landmark_embs,
                         const std::vector<std::vector<Tensor>>& object_embs,
                         int n_max);

// gamma = softmax(W [h_prev; img; sim] + b); pass an undefined Tensor as
// `sim` when the similarity channel is disabled.
Tensor predict_controller(const Tensor& h_prev, const Tensor& img_attended,
                          const Tensor& sim, const Tensor& w, const Tensor& b);

// C_hat = sum_i alpha[i] * enriched[i].
Tensor grounded_instruction(const Tensor& alpha, const std::vector<Tensor>& enriched);

struct ObjectAligned {
    Tensor vector;                    // decoder visual input
    Tensor image_weights;             // second-level weights
    std::vector<Tensor> per_image;    // first-level attended objects
};

// Two-level alignment: objects within each image are attended by the
// grounded configuration, then images are attended by the previous context
// with the attended objects as keys and the projected images as values.
// Images with no objects contribute a zero key.
ObjectAligned object_align(const Tensor& grounded,
                           const std::vector<std::vector<Tensor>>& object_embs,
                           const Tensor& h_prev, const std::vector<Tensor>& projected_images,
                           const Tensor& w_obj, const Tensor& w_objimg,
                           std::span<const char> invalid = {});

}  // namespace spcnav::attn
