#include "spcnav/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace spcnav::attn {

Attended soft_attn(const Tensor& query, const std::vector<Tensor>& keys,
                   const std::vector<Tensor>& values, const Tensor& w,
                   std::span<const char> invalid) {
    if (keys.empty() || keys.size() != values.size())
        throw std::invalid_argument("soft_attn: keys/values must be non-empty and aligned");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(keys[0].dim(0)));
    Tensor wq = matvec(w, query);
    std::vector<Tensor> scores;
    scores.reserve(keys.size());
    for (const auto& k : keys) scores.push_back(scale(dot(wq, k), inv_sqrt_dk));
    Tensor weights = masked_softmax(concat(scores), invalid);
    return {blend(weights, values), weights};
}

Attended config_repr(const std::vector<Tensor>& tokens_with_delim, const Tensor& w) {
    if (tokens_with_delim.empty())
        throw std::invalid_argument("config_repr: empty configuration");
    return soft_attn(tokens_with_delim.back(), tokens_with_delim, tokens_with_delim, w);
}

Attended image_attn(const Tensor& h_prev, const std::vector<Tensor>& projected_images,
                    const Tensor& w, std::span<const char> invalid) {
    if (projected_images.empty()) throw std::invalid_argument("image_attn: no images");
    return soft_attn(h_prev, projected_images, projected_images, w, invalid);
}

Tensor state_attn_update(const Tensor& alpha_prev, const Tensor& gamma) {
    if (alpha_prev.shape().size() != 1 || alpha_prev.dim(0) < 1)
        throw std::invalid_argument("state_attn_update: alpha must be a non-empty vector");
    if (gamma.shape().size() != 1 || gamma.dim(0) != 2)
        throw std::invalid_argument("state_attn_update: gamma must have length 2");
    const int m = alpha_prev.dim(0);
    const double g0 = gamma.data()[0];
    const double g1 = gamma.data()[1];
    const auto& a = alpha_prev.data();
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        out[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)] * g0;
        if (i > 0) out[static_cast<std::size_t>(i)] += a[static_cast<std::size_t>(i - 1)] * g1;
    }
    // Clamp: advancing mass cannot leave the final configuration.
    out[static_cast<std::size_t>(m - 1)] += a[static_cast<std::size_t>(m - 1)] * g1;
    return make_op({m}, std::move(out), {alpha_prev, gamma}, [m](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& pg = node.parents[1];
        const double g0 = pg->value[0];
        const double g1 = pg->value[1];
        const double* grad = node.grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int i = 0; i < m; ++i) {
                double g = grad[i] * g0;
                if (i + 1 < m) g += grad[i + 1] * g1;
                if (i == m - 1) g += grad[m - 1] * g1;
                pa->grad[static_cast<std::size_t>(i)] += g;
            }
        }
        if (pg->requires_grad) {
            pg->ensure_grad();
            double d0 = 0.0, d1 = 0.0;
            for (int i = 0; i < m; ++i) {
                d0 += grad[i] * pa->value[static_cast<std::size_t>(i)];
                if (i > 0) d1 += grad[i] * pa->value[static_cast<std::size_t>(i - 1)];
            }
            d1 += grad[m - 1] * pa->value[static_cast<std::size_t>(m - 1)];
            pg->grad[0] += d0;
            pg->grad[1] += d1;
        }
    });
}

namespace {

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

Tensor similarity_scores(const Tensor& alpha_prev,
                         const std::vector<std::vector<Tensor>>& landmark_embs,
                         const std::vector<std::vector<Tensor>>& object_embs,
                         int n_max) {
    const int m = alpha_prev.dim(0);
    if (static_cast<std::size_t>(m) != landmark_embs.size())
        throw std::invalid_argument("similarity_scores: alpha / landmark count mismatch");
    const int n = static_cast<int>(object_embs.size());
    if (n > n_max) throw std::invalid_argument("similarity_scores: more images than n_max");

    // Parents: alpha, then all landmark embeddings, then all object
    // embeddings, flattened in order.
    std::vector<Tensor> parents;
    parents.push_back(alpha_prev);
    std::vector<int> lm_offset(static_cast<std::size_t>(m) + 1, 1);
    for (int i = 0; i < m; ++i) {
        for (const auto& t : landmark_embs[static_cast<std::size_t>(i)]) parents.push_back(t);
        lm_offset[static_cast<std::size_t>(i) + 1] =
            lm_offset[static_cast<std::size_t>(i)] +
            static_cast<int>(landmark_embs[static_cast<std::size_t>(i)].size());
    }
    std::vector<int> obj_offset(static_cast<std::size_t>(n) + 1, lm_offset[static_cast<std::size_t>(m)]);
    for (int j = 0; j < n; ++j) {
        for (const auto& t : object_embs[static_cast<std::size_t>(j)]) parents.push_back(t);
        obj_offset[static_cast<std::size_t>(j) + 1] =
            obj_offset[static_cast<std::size_t>(j)] +
            static_cast<int>(object_embs[static_cast<std::size_t>(j)].size());
    }

    struct Best {
        int lm = -1;    // parent index of winning landmark
        int obj = -1;   // parent index of winning object
        double cosine = 0.0;
        double inv_na = 0.0;
        double inv_nb = 0.0;
    };
    // Winning pair per (config, image); index i * n + j.
    std::vector<Best> best(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    std::vector<double> out(static_cast<std::size_t>(n_max), 0.0);
    for (int j = 0; j < n; ++j) {
        double sj = 0.0;
        for (int i = 0; i < m; ++i) {
            const auto& lms = landmark_embs[static_cast<std::size_t>(i)];
            if (lms.empty()) continue;
            Best b;
            bool have = false;
            for (int li = 0; li < static_cast<int>(lms.size()); ++li) {
                const auto& a = lms[static_cast<std::size_t>(li)].data();
                const double na = vec_norm(a);
                for (int ki = 0; ki < static_cast<int>(object_embs[static_cast<std::size_t>(j)].size()); ++ki) {
                    const auto& o = object_embs[static_cast<std::size_t>(j)][static_cast<std::size_t>(ki)].data();
                    if (a.size() != o.size())
                        throw std::invalid_argument("similarity_scores: embedding dims differ");
                    const double nb = vec_norm(o);
                    double c = 0.0;
                    if (na > 0.0 && nb > 0.0) {
                        double d = 0.0;
                        for (std::size_t x = 0; x < a.size(); ++x) d += a[x] * o[x];
                        c = d / (na * nb);
                    }
                    if (!have || c > b.cosine) {
                        have = true;
                        b.cosine = c;
                        b.lm = lm_offset[static_cast<std::size_t>(i)] + li;
                        b.obj = obj_offset[static_cast<std::size_t>(j)] + ki;
                        b.inv_na = na > 0.0 ? 1.0 / na : 0.0;
                        b.inv_nb = nb > 0.0 ? 1.0 / nb : 0.0;
                    }
                }
            }
            if (!have) continue;  // image has no objects
            best[static_cast<std::size_t>(i) * n + j] = b;
            sj += alpha_prev.data()[static_cast<std::size_t>(i)] * b.cosine;
        }
        out[static_cast<std::size_t>(j)] = sj;
    }

    return make_op({n_max}, std::move(out), std::move(parents),
                   [m, n, best = std::move(best)](TensorNode& node) {
                       auto& alpha = node.parents[0];
                       for (int j = 0; j < n; ++j) {
                           const double g = node.grad[static_cast<std::size_t>(j)];
                           if (g == 0.0) continue;
                           for (int i = 0; i < m; ++i) {
                               const Best& b = best[static_cast<std::size_t>(i) * n + j];
                               if (b.lm < 0) continue;
                               const double ai = alpha->value[static_cast<std::size_t>(i)];
                               if (alpha->requires_grad) {
                                   alpha->ensure_grad();
                                   alpha->grad[static_cast<std::size_t>(i)] += g * b.cosine;
                               }
                               if (b.inv_na == 0.0 || b.inv_nb == 0.0) continue;
                               auto& pav = node.parents[static_cast<std::size_t>(b.lm)];
                               auto& pbv = node.parents[static_cast<std::size_t>(b.obj)];
                               const double w = g * ai;
                               if (pav->requires_grad) {
                                   pav->ensure_grad();
                                   for (std::size_t x = 0; x < pav->value.size(); ++x) {
                                       const double da =
                                           pbv->value[x] * b.inv_na * b.inv_nb -
                                           b.cosine * pav->value[x] * b.inv_na * b.inv_na;
                                       pav->grad[x] += w * da;
                                   }
                               }
                               if (pbv->requires_grad) {
                                   pbv->ensure_grad();
                                   for (std::size_t x = 0; x < pbv->value.size(); ++x) {
                                       const double db =
                                           pav->value[x] * b.inv_na * b.inv_nb -
                                           b.cosine * pbv->value[x] * b.inv_nb * b.inv_nb;
                                       pbv->grad[x] += w * db;
                                   }
                               }
                           }
                       }
                   });
}

Tensor predict_controller(const Tensor& h_prev, const Tensor& img_attended,
                          const Tensor& sim, const Tensor& w, const Tensor& b) {
    std::vector<Tensor> parts = {h_prev, img_attended};
    if (sim.defined()) parts.push_back(sim);
    Tensor logits = add(matvec(w, concat(parts)), b);
    return masked_softmax(logits);
}

Tensor grounded_instruction(const Tensor& alpha, const std::vector<Tensor>& enriched) {
    if (enriched.empty() || static_cast<int>(enriched.size()) != alpha.dim(0))
        throw std::invalid_argument("grounded_instruction: alpha/config count mismatch");
    return blend(alpha, enriched);
}

ObjectAligned object_align(const Tensor& grounded,
                           const std::vector<std::vector<Tensor>>& object_embs,
                           const Tensor& h_prev, const std::vector<Tensor>& projected_images,
                           const Tensor& w_obj, const Tensor& w_objimg,
                           std::span<const char> invalid) {
    if (object_embs.size() != projected_images.size())
        throw std::invalid_argument("object_align: image/object list mismatch");
    ObjectAligned out;
    const int obj_dim = w_obj.dim(0);
    for (const auto& objs : object_embs) {
        if (objs.empty()) {
            out.per_image.push_back(Tensor::zeros({obj_dim}));
        } else {
            out.per_image.push_back(soft_attn(grounded, objs, objs, w_obj).vector);
        }
    }
    Attended second = soft_attn(h_prev, out.per_image, projected_images, w_objimg, invalid);
    out.vector = second.vector;
    out.image_weights = second.weights;
    return out;
}

}  // namespace spcnav::attn
