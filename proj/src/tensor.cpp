#include "spcnav/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spcnav {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

[[noreturn]] void shape_error(const std::string& op, const std::vector<int>& a,
                              const std::vector<int>& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes [";
    for (std::size_t i = 0; i < a.size(); ++i) os << (i ? "," : "") << a[i];
    os << "] vs [";
    for (std::size_t i = 0; i < b.size(); ++i) os << (i ? "," : "") << b[i];
    os << "]";
    throw std::invalid_argument(os.str());
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
    auto n = std::make_shared<TensorNode>();
    n->value.assign(shape_count(shape), 0.0);
    n->shape = std::move(shape);
    return Tensor(n);
}

Tensor Tensor::from(std::vector<double> data, std::vector<int> shape) {
    if (data.size() != shape_count(shape)) throw std::invalid_argument("data/shape mismatch");
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(data);
    n->shape = std::move(shape);
    return Tensor(n);
}

Tensor Tensor::scalar(double v) { return from({v}, {1}); }

Tensor Tensor::leaf(std::vector<double> data, std::vector<int> shape) {
    Tensor t = from(std::move(data), std::move(shape));
    t.node()->requires_grad = true;
    t.node()->ensure_grad();
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor");
    return node_->value[0];
}

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }
Tape::~Tape() { g_active_tape = prev_; }
bool Tape::recording() { return g_active_tape != nullptr; }
Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    // Intermediate grads are scratch per backward pass; leaves (parameters)
    // are not on the tape and keep accumulating.
    for (auto& n : nodes_) {
        if (!n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        TensorNode& n = **it;
        if (n.grad.empty() || !n.backprop) continue;
        bool any = false;
        for (double g : n.grad) {
            if (g != 0.0) { any = true; break; }
        }
        if (!any) continue;
        n.backprop(n);
    }
}

Tensor make_op(std::vector<int> shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backprop) {
    if (value.size() != shape_count(shape)) throw std::invalid_argument("make_op: data/shape mismatch");
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool want = false;
    for (const auto& p : parents)
        if (p.requires_grad()) want = true;
    if (Tape::recording() && want) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backprop = std::move(backprop);
        n->ensure_grad();
        Tape::active()->record(n);
    }
    return Tensor(n);
}

namespace {

// Adds g into the parent's grad buffer, allocating on first touch.
void accum(const NodePtr& parent, std::size_t i, double g) {
    if (!parent->requires_grad) return;
    parent->ensure_grad();
    parent->grad[i] += g;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
        shape_error("matmul", a.shape(), b.shape());
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] += av * pb[p * n + j];
        }
    return make_op({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& pb = node.parents[1];
        const double* g = node.grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j) s += g[i * n + j] * pb->value[static_cast<std::size_t>(p) * n + j];
                    pa->grad[static_cast<std::size_t>(i) * k + p] += s;
                }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i) s += pa->value[static_cast<std::size_t>(i) * k + p] * g[i * n + j];
                    pb->grad[static_cast<std::size_t>(p) * n + j] += s;
                }
        }
    });
}

Tensor matvec(const Tensor& a, const Tensor& x) {
    if (a.shape().size() != 2 || x.shape().size() != 1 || a.dim(1) != x.dim(0))
        shape_error("matvec", a.shape(), x.shape());
    const int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m), 0.0);
    const double* pa = a.data().data();
    const double* px = x.data().data();
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = pa + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) s += row[j] * px[j];
        out[static_cast<std::size_t>(i)] = s;
    }
    return make_op({m}, std::move(out), {a, x}, [m, n](TensorNode& node) {
        auto& pa = node.parents[0];
        auto& px = node.parents[1];
        const double* g = node.grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double gi = g[i];
                if (gi == 0.0) continue;
                double* row = pa->grad.data() + static_cast<std::size_t>(i) * n;
                const double* xv = px->value.data();
                for (int j = 0; j < n; ++j) row[j] += gi * xv[j];
            }
        }
        if (px->requires_grad) {
            px->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double gi = g[i];
                if (gi == 0.0) continue;
                const double* row = pa->value.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) px->grad[static_cast<std::size_t>(j)] += gi * row[j];
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) shape_error("add", a.shape(), b.shape());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            accum(node.parents[0], i, node.grad[i]);
            accum(node.parents[1], i, node.grad[i]);
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) shape_error("sub", a.shape(), b.shape());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            accum(node.parents[0], i, node.grad[i]);
            accum(node.parents[1], i, -node.grad[i]);
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) shape_error("mul", a.shape(), b.shape());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            accum(node.parents[0], i, node.grad[i] * node.parents[1]->value[i]);
            accum(node.parents[1], i, node.grad[i] * node.parents[0]->value[i]);
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) accum(node.parents[0], i, node.grad[i] * c);
    });
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input");
    std::vector<double> out;
    for (const auto& p : parts) {
        if (p.shape().size() != 1) throw std::invalid_argument("concat: 1-D tensors only");
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    const int total = static_cast<int>(out.size());
    return make_op({total}, std::move(out), parts, [](TensorNode& node) {
        std::size_t off = 0;
        for (auto& p : node.parents) {
            for (std::size_t i = 0; i < p->value.size(); ++i) accum(p, i, node.grad[off + i]);
            off += p->value.size();
        }
    });
}

Tensor slice(const Tensor& x, int offset, int len) {
    if (x.shape().size() != 1 || offset < 0 || len <= 0 || offset + len > x.dim(0))
        throw std::invalid_argument("slice: bad range");
    std::vector<double> out(x.data().begin() + offset, x.data().begin() + offset + len);
    return make_op({len}, std::move(out), {x}, [offset](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i)
            accum(node.parents[0], static_cast<std::size_t>(offset) + i, node.grad[i]);
    });
}

Tensor tanh_op(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
    return make_op(x.shape(), std::move(out), {x}, [](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            const double y = node.value[i];
            accum(node.parents[0], i, node.grad[i] * (1.0 - y * y));
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
    return make_op(x.shape(), std::move(out), {x}, [](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            const double y = node.value[i];
            accum(node.parents[0], i, node.grad[i] * y * (1.0 - y));
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    return make_op(x.shape(), std::move(out), {x}, [](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i)
            if (node.parents[0]->value[i] > 0.0) accum(node.parents[0], i, node.grad[i]);
    });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 1 || !same_shape(a, b)) shape_error("dot", a.shape(), b.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return make_op({1}, {s}, {a, b}, [](TensorNode& node) {
        const double g = node.grad[0];
        for (std::size_t i = 0; i < node.parents[0]->value.size(); ++i) {
            accum(node.parents[0], i, g * node.parents[1]->value[i]);
            accum(node.parents[1], i, g * node.parents[0]->value[i]);
        }
    });
}

Tensor masked_softmax(const Tensor& x, std::span<const char> invalid) {
    if (x.shape().size() != 1) throw std::invalid_argument("masked_softmax: 1-D only");
    if (!invalid.empty() && invalid.size() != x.size())
        throw std::invalid_argument("masked_softmax: mask length mismatch");
    const std::size_t n = x.size();
    auto is_valid = [&](std::size_t i) { return invalid.empty() || !invalid[i]; };
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < n; ++i)
        if (is_valid(i)) { mx = std::max(mx, x.data()[i]); any = true; }
    if (!any) throw std::invalid_argument("masked_softmax: all entries masked");
    std::vector<double> out(n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (is_valid(i)) { out[i] = std::exp(x.data()[i] - mx); z += out[i]; }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
    std::vector<char> inv(invalid.begin(), invalid.end());
    return make_op(x.shape(), std::move(out), {x}, [inv = std::move(inv)](TensorNode& node) {
        const std::size_t n = node.value.size();
        double gsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) gsum += node.grad[i] * node.value[i];
        for (std::size_t i = 0; i < n; ++i) {
            if (!inv.empty() && inv[i]) continue;
            accum(node.parents[0], i, node.value[i] * (node.grad[i] - gsum));
        }
    });
}

Tensor embedding_row(const Tensor& table, int row) {
    if (table.shape().size() != 2 || row < 0 || row >= table.dim(0))
        throw std::invalid_argument("embedding_row: bad row index");
    const int d = table.dim(1);
    std::vector<double> out(table.data().begin() + static_cast<std::size_t>(row) * d,
                            table.data().begin() + static_cast<std::size_t>(row + 1) * d);
    return make_op({d}, std::move(out), {table}, [row, d](TensorNode& node) {
        for (int i = 0; i < d; ++i)
            accum(node.parents[0], static_cast<std::size_t>(row) * d + i, node.grad[static_cast<std::size_t>(i)]);
    });
}

Tensor blend(const Tensor& weights, const std::vector<Tensor>& vs) {
    if (weights.shape().size() != 1 || static_cast<std::size_t>(weights.dim(0)) != vs.size() || vs.empty())
        throw std::invalid_argument("blend: weights/vector count mismatch");
    const int d = vs[0].dim(0);
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (vs[i].shape().size() != 1 || vs[i].dim(0) != d)
            shape_error("blend", vs[0].shape(), vs[i].shape());
        const double w = weights.data()[i];
        for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += w * vs[i].data()[static_cast<std::size_t>(j)];
    }
    std::vector<Tensor> parents;
    parents.reserve(vs.size() + 1);
    parents.push_back(weights);
    for (const auto& v : vs) parents.push_back(v);
    return make_op({d}, std::move(out), std::move(parents), [d](TensorNode& node) {
        auto& w = node.parents[0];
        const std::size_t m = node.parents.size() - 1;
        for (std::size_t i = 0; i < m; ++i) {
            auto& v = node.parents[i + 1];
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += node.grad[static_cast<std::size_t>(j)] * v->value[static_cast<std::size_t>(j)];
            accum(w, i, s);
            if (v->requires_grad) {
                v->ensure_grad();
                const double wi = w->value[i];
                for (int j = 0; j < d; ++j) v->grad[static_cast<std::size_t>(j)] += wi * node.grad[static_cast<std::size_t>(j)];
            }
        }
    });
}

Tensor max_of(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) throw std::invalid_argument("max_of: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scalars.size(); ++i)
        if (scalars[i].item() > scalars[best].item()) best = i;
    const double v = scalars[best].item();
    return make_op({1}, {v}, scalars, [best](TensorNode& node) {
        accum(node.parents[best], 0, node.grad[0]);
    });
}

Tensor cross_entropy(const Tensor& logits, int target) {
    if (logits.shape().size() != 1) throw std::invalid_argument("cross_entropy: 1-D logits only");
    if (target < 0 || target >= logits.dim(0))
        throw std::out_of_range("cross_entropy: target out of range");
    const std::size_t n = logits.size();
    double mx = logits.data()[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits.data()[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits.data()[i] - mx);
    const double loss = std::log(z) + mx - logits.data()[static_cast<std::size_t>(target)];
    return make_op({1}, {loss}, {logits}, [target, mx, z](TensorNode& node) {
        const double g = node.grad[0];
        auto& p = node.parents[0];
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double soft = std::exp(p->value[i] - mx) / z;
            accum(p, i, g * (soft - (static_cast<int>(i) == target ? 1.0 : 0.0)));
        }
    });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    if (!same_shape(pred, target)) shape_error("mse", pred.shape(), target.shape());
    const std::size_t n = pred.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    return make_op({1}, {s / static_cast<double>(n)}, {pred, target}, [n](TensorNode& node) {
        const double g = node.grad[0] * 2.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = node.parents[0]->value[i] - node.parents[1]->value[i];
            accum(node.parents[0], i, g * d);
            accum(node.parents[1], i, -g * d);
        }
    });
}

LstmState lstm_cell(const LstmParams& p, const Tensor& x, const LstmState& prev) {
    const int h = p.hidden;
    if (p.w_input.dim(0) != 4 * h || p.w_hidden.dim(0) != 4 * h || p.bias.dim(0) != 4 * h)
        throw std::invalid_argument("lstm_cell: parameter shapes disagree with hidden size");
    if (prev.h.dim(0) != h || prev.c.dim(0) != h)
        throw std::invalid_argument("lstm_cell: state size mismatch");
    Tensor pre = add(add(matvec(p.w_input, x), matvec(p.w_hidden, prev.h)), p.bias);
    Tensor gi = sigmoid(slice(pre, 0, h));
    Tensor gf = sigmoid(slice(pre, h, h));
    Tensor gc = tanh_op(slice(pre, 2 * h, h));
    Tensor go = sigmoid(slice(pre, 3 * h, h));
    Tensor c = add(mul(gf, prev.c), mul(gi, gc));
    Tensor hh = mul(go, tanh_op(c));
    return {hh, c};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

Tensor ParameterStore::add_matrix(const std::string& name, int rows, int cols, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (auto& v : data) v = uniform(rng, -bound, bound);
    return add(name, std::move(data), {rows, cols});
}

Tensor ParameterStore::add_vector_zeros(const std::string& name, int len) {
    return add(name, std::vector<double>(static_cast<std::size_t>(len), 0.0), {len});
}

Tensor ParameterStore::add(const std::string& name, std::vector<double> data, std::vector<int> shape) {
    for (const auto& p : params_)
        if (p.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    Parameter p;
    p.name = name;
    p.value = Tensor::leaf(std::move(data), std::move(shape));
    p.m.assign(p.value.size(), 0.0);
    p.v.assign(p.value.size(), 0.0);
    params_.push_back(std::move(p));
    return params_.back().value;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    throw std::out_of_range("unknown parameter: " + name);
}

Parameter& ParameterStore::at(const std::string& name) { return params_[index_of(name)]; }

std::size_t ParameterStore::total_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) {
        auto node = p.value.node();
        node->ensure_grad();
        std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
}

void ParameterStore::adam_step(const AdamConfig& cfg) {
    for (auto& p : params_) {
        auto node = p.value.node();
        node->ensure_grad();
        p.step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
        for (std::size_t i = 0; i < node->value.size(); ++i) {
            const double g = node->grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p.m[i] / bc1;
            const double vhat = p.v[i] / bc2;
            node->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'C', 'N', 'A', 'V', 'C', '1'};

void write_raw(std::ofstream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::ifstream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
}

}  // namespace

void Checkpoint::save(const std::string& path, const ParameterStore& store) const {
    nlohmann::json header;
    header["format_version"] = format_version;
    header["hyper"] = hyper_json.empty() ? nlohmann::json::object()
                                         : nlohmann::json::parse(hyper_json);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& p : store.all()) {
        entries.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"step", p.step}});
    }
    header["entries"] = entries;
    const std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    write_raw(os, kMagic, sizeof(kMagic));
    const std::uint32_t ver = static_cast<std::uint32_t>(format_version);
    write_raw(os, &ver, sizeof(ver));
    const std::uint64_t hl = hs.size();
    write_raw(os, &hl, sizeof(hl));
    write_raw(os, hs.data(), hs.size());
    for (const auto& p : store.all()) {
        write_raw(os, p.value.data().data(), p.value.size() * sizeof(double));
        write_raw(os, p.m.data(), p.m.size() * sizeof(double));
        write_raw(os, p.v.data(), p.v.size() * sizeof(double));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

namespace {

nlohmann::json read_header(std::ifstream& is, const std::string& path) {
    char magic[8];
    read_raw(is, magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint32_t ver = 0;
    read_raw(is, &ver, sizeof(ver));
    if (ver != 1) throw std::runtime_error("checkpoint: unsupported format version");
    std::uint64_t hl = 0;
    read_raw(is, &hl, sizeof(hl));
    std::string hs(hl, '\0');
    read_raw(is, hs.data(), hl);
    return nlohmann::json::parse(hs);
}

}  // namespace

Checkpoint Checkpoint::load(const std::string& path, ParameterStore& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    nlohmann::json header = read_header(is, path);
    Checkpoint ck;
    ck.format_version = header.at("format_version").get<int>();
    ck.hyper_json = header.at("hyper").dump();
    const auto& entries = header.at("entries");
    if (entries.size() != store.all().size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& p = store.all()[i];
        const auto& e = entries[i];
        if (e.at("name").get<std::string>() != p.name)
            throw std::runtime_error("checkpoint: parameter order mismatch at " + p.name);
        if (e.at("shape").get<std::vector<int>>() != p.value.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
        p.step = e.at("step").get<std::int64_t>();
        read_raw(is, p.value.data().data(), p.value.size() * sizeof(double));
        read_raw(is, p.m.data(), p.m.size() * sizeof(double));
        read_raw(is, p.v.data(), p.v.size() * sizeof(double));
    }
    return ck;
}

std::string Checkpoint::peek_hyper(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    return read_header(is, path).at("hyper").dump();
}

}  // namespace spcnav
