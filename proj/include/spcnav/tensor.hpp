#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace spcnav {

// Dense float64 tensor with reverse-mode autodiff. Values are row-major.
// Gradients are recorded only while a Tape is active (see Tape below);
// outside a tape, ops compute plain values.

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    // Pulls this node's grad into the parents' grads.
    std::function<void(TensorNode&)> backprop;

    std::size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor from(std::vector<double> data, std::vector<int> shape);
    static Tensor scalar(double v);
    // Leaf tensor that participates in gradient accumulation.
    static Tensor leaf(std::vector<double> data, std::vector<int> shape);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return node_->size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& data() { return node_->value; }
    const std::vector<double>& grad() const { return node_->grad; }
    double item() const;
    double operator[](std::size_t i) const { return node_->value[i]; }

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// Ordered record of differentiable ops. Creation order is topological, so
// backward() walks the record once, in reverse, from the loss node.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static bool recording();
    static Tape* active();
    void record(const NodePtr& n) { nodes_.push_back(n); }
    std::size_t size() const { return nodes_.size(); }

    // Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable
    // from `loss`. Intermediate grads are scratch; leaf grads accumulate
    // across calls. Throws if loss is not a scalar on this tape.
    void backward(const Tensor& loss);

private:
    std::vector<NodePtr> nodes_;
    Tape* prev_ = nullptr;
};

// Helper for defining ops: computes nothing itself, just wires the node.
Tensor make_op(std::vector<int> shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backprop);

// ---- core ops ----
Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k]x[k,n]
Tensor matvec(const Tensor& a, const Tensor& x);          // [m,n]x[n]
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& a, double c);
Tensor concat(const std::vector<Tensor>& parts);          // 1-D
Tensor slice(const Tensor& x, int offset, int len);       // 1-D
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);             // 1-D -> scalar
// Softmax over a vector; entries flagged in `invalid` get probability 0.
// Empty mask = no masking. Throws if every entry is masked.
Tensor masked_softmax(const Tensor& x, std::span<const char> invalid = {});
Tensor embedding_row(const Tensor& table, int row);       // [v,d] -> [d]
// Convex/linear combination sum_i w[i] * vs[i] for 1-D vectors.
Tensor blend(const Tensor& weights, const std::vector<Tensor>& vs);
Tensor max_of(const std::vector<Tensor>& scalars);        // subgradient max

// ---- losses ----
Tensor cross_entropy(const Tensor& logits, int target);   // -log softmax[t]
Tensor mse(const Tensor& pred, const Tensor& target);     // mean sq. diff

// ---- LSTM ----
// Gate layout in the stacked preactivation: [input; forget; cell; output].
struct LstmParams {
    Tensor w_input;   // [4h, in]
    Tensor w_hidden;  // [4h, h]
    Tensor bias;      // [4h]
    int hidden = 0;
};
struct LstmState {
    Tensor h;
    Tensor c;
};
LstmState lstm_cell(const LstmParams& p, const Tensor& x, const LstmState& prev);

// ---- parameters / optimizer ----
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
    std::int64_t step = 0;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class ParameterStore {
public:
    // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for matrices.
    Tensor add_matrix(const std::string& name, int rows, int cols, std::mt19937_64& rng);
    Tensor add_vector_zeros(const std::string& name, int len);
    Tensor add(const std::string& name, std::vector<double> data, std::vector<int> shape);

    Parameter& at(const std::string& name);
    const std::vector<Parameter>& all() const { return params_; }
    std::vector<Parameter>& all() { return params_; }
    std::size_t total_count() const;

    void zero_grad();
    // Bias-corrected update, then clears gradients.
    void adam_step(const AdamConfig& cfg);

private:
    std::vector<Parameter> params_;
    std::size_t index_of(const std::string& name) const;
};

// ---- checkpoint container ----
// Layout: magic "SPCNAVC1", u32 format version, u64 header length, header
// JSON, then for each entry the value/m/v buffers as little-endian float64.
struct Checkpoint {
    int format_version = 1;
    std::string hyper_json;  // model + run hyperparameters, opaque here
    void save(const std::string& path, const ParameterStore& store) const;
    // Restores values and optimizer moments; shapes must match the header.
    static Checkpoint load(const std::string& path, ParameterStore& store);
    // Reads only the hyperparameter header.
    static std::string peek_hyper(const std::string& path);
};

double uniform(std::mt19937_64& rng, double lo, double hi);

}  // namespace spcnav
