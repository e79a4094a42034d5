#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ticketlab {

class Rng;

// Reverse-mode automatic differentiation over dense f64 arrays.
//
// A Tensor is a cheap handle onto a graph node. Operations allocate new
// nodes that keep their inputs alive; backward() discovers the subgraph
// below a scalar loss, orders it topologically and runs each node's
// gradient rule exactly once, in reverse creation order. Gradients
// accumulate into `grad` until zero_grad() — one backward pass can feed
// both an optimizer step and mask-sensitivity reads.
//
// Graphs and their tensors are confined to one thread at a time.

struct TensorNode;

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<size_t> shape, double value, bool requires_grad = false);
    static Tensor from_values(std::vector<size_t> shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(std::vector<size_t> shape, Rng& rng, double stddev,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }

    const std::vector<size_t>& shape() const;
    size_t size() const;
    size_t ndim() const;
    // 2-D helpers
    size_t rows() const;
    size_t cols() const;

    std::vector<double>& values();
    const std::vector<double>& values() const;
    double value() const;                 // scalar tensors
    double at(size_t r, size_t c) const;  // 2-D
    double& at(size_t r, size_t c);

    bool requires_grad() const;
    Tensor& set_requires_grad(bool rg);

    bool has_grad() const;
    std::vector<double>& grad();              // allocates zeros on first use
    const std::vector<double>& grad() const;  // throws if absent
    void zero_grad();

    // Seeds d(this)/d(this) = 1 and propagates through the recorded graph.
    // `this` must be scalar. Repeated calls accumulate into existing grads.
    void backward() const;

    // Value copy detached from any graph.
    Tensor detach() const;

    TensorNode* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode> node_;

    friend Tensor make_op_tensor(std::vector<size_t> shape, std::vector<double> values,
                                 std::vector<Tensor> parents,
                                 std::function<void(TensorNode&)> backward_fn);
};

struct TensorNode {
    std::vector<size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until needed; same length as values when present
    bool requires_grad = false;
    uint64_t seq = 0;  // creation order; backward replays in decreasing seq
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad();
};

// Cheap per-thread probe of real work done, used to verify that masked
// heads cost nothing.
struct OpStats {
    uint64_t matmuls = 0;
    uint64_t fused_multiply_adds = 0;
    void reset() { *this = OpStats{}; }
};
OpStats& op_stats();

// ---- operations -----------------------------------------------------------

// standard matrix product; dA = dC.B^T, dB = A^T.dC
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);               // same shape
Tensor add_rowvec(const Tensor& a, const Tensor& row);      // row broadcast over 2-D a
Tensor mul(const Tensor& a, const Tensor& b);               // elementwise
Tensor scale(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, const Tensor& s);        // s is a 1-element tensor

// max-subtraction stabilized; outputs sum to 1 along `axis`
Tensor softmax(const Tensor& t, size_t axis);
// last-axis normalization to zero mean / unit variance, then gain & bias
Tensor layer_norm(const Tensor& t, const Tensor& gain, const Tensor& bias, double eps);

Tensor gelu(const Tensor& a);
Tensor tanh_op(const Tensor& a);

Tensor sum(const Tensor& a);      // scalar
Tensor mean_all(const Tensor& a); // scalar

// rows of `a` picked by index; gradient scatter-adds (embedding lookup etc.)
Tensor gather_rows(const Tensor& a, const std::vector<size_t>& indices);

// mean negative log-likelihood over rows; labels index columns
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<size_t>& labels);
Tensor mse(const Tensor& pred, const Tensor& target);

// inverted-dropout mask drawn from rng; identity when rate == 0
Tensor dropout(const Tensor& a, double rate, Rng& rng);

bool all_finite(const Tensor& t);

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// with numeric = central finite differences of `f` at step `step`.
// `f` must be deterministic given the parameter values.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double step);

} // namespace ticketlab
