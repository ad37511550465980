#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tsgen {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// One node of the computation graph: a dense double tensor plus, when it
/// participates in differentiation, the closure that routes its gradient
/// back to its parents.
struct TensorNode {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }
};

/// Value handle over a graph node. Copies share the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double value);
    static Tensor from(const Shape& shape, std::vector<double> values);
    /// Leaf with requires_grad set; the unit the optimizer updates.
    static Tensor param(const Shape& shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return node_->numel(); }
    std::vector<double>& values() const { return node_->v; }
    std::vector<double>& grad() const { return node_->g; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<TensorNode> node() const { return node_; }

    double item() const;

private:
    std::shared_ptr<TensorNode> node_;
};

/// While alive, newly created ops do not record the graph. Used for
/// inference (completion at sampling time, the sampler itself, metrics on
/// frozen models).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

/// Reverse-mode sweep from a scalar loss. Accumulates into .grad() of every
/// reachable node with requires_grad; caller zeroes parameter grads between
/// steps (Adam does this).
void backward(const Tensor& loss);

// ---- op set -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

/// y[b, ...] = x[b, ...] * c[b]  (c constant, no gradient into c).
Tensor mul_rows(const Tensor& x, const std::vector<double>& c);

/// Adds a parameter over one axis of x, broadcasting the rest
/// (bias over channels for conv inputs: axis=1).
Tensor add_axis_bias(const Tensor& x, const Tensor& bias, int axis);

/// Adds a parameter whose shape matches the trailing dims of x
/// (positional embeddings: x [B,L,H] + p [L,H]).
Tensor add_suffix(const Tensor& x, const Tensor& p);

/// x [..., K] times W [K, N] plus optional bias [N].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

/// Batched matmul on [B,M,K] x [B,K,N]; flags transpose the last two dims.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor upsample_nearest2(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs_t(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  double eps = 1e-5);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<int>& dims);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
/// Sums every dim but the first: [B, ...] -> [B].
Tensor sum_per_sample(const Tensor& x);
/// dot(x, c) with constant weights; x [B] -> scalar.
Tensor dot_const(const Tensor& x, const std::vector<double>& c);

/// Numerically stable binary cross-entropy on logits against constant
/// targets in {0,1}; returns the mean.
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets);

/// Scale-and-shift over channel maps: y[b,c,:,:] = x[b,c,:,:]*(1+s[b,c]) + t[b,c].
Tensor scale_shift_2d(const Tensor& x, const Tensor& s, const Tensor& t);

namespace detail {
/// Builds a graph node for a custom op. Parents may include undefined
/// tensors (skipped). The backward closure receives the finished node and
/// must accumulate into each grad-requiring parent.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn);
}  // namespace detail

}  // namespace tsgen
