#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace diffret {

class GradTape;

namespace detail {

struct Node {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated by GradTape::backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Copies are shallow handles to a
// shared node; parameter tensors are mutated in place by the optimizer,
// everything else is treated as immutable once created. Every op validates
// that its output is finite and throws NumericError otherwise.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor from(std::vector<int64_t> shape, std::vector<double> data);
    static Tensor scalar(double value);
    static Tensor one_hot(int64_t n, int64_t index);
    static Tensor identity(int64_t n);
    // Leaf with requires_grad set; participates in backward.
    static Tensor param(std::vector<int64_t> shape, std::vector<double> data);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const;
    int64_t rank() const { return static_cast<int64_t>(shape().size()); }
    int64_t numel() const;
    int64_t dim(int axis) const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    std::span<const double> grad() const;  // empty until backward has run
    bool requires_grad() const;

    double item() const;                       // numel()==1
    double at(int64_t i) const;                // rank 1
    double at(int64_t i, int64_t j) const;     // rank 2

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend class GradTape;
    friend Tensor make_op(const char* name, std::vector<int64_t> shape, std::vector<double> data,
                          const std::vector<Tensor>& inputs,
                          std::function<void(detail::Node&)> backward);
};

// Ordered record of the ops of one forward pass. Creation order is a
// topological order (inputs precede their consumers), so backward is a single
// reverse sweep that visits each node exactly once. Exactly one tape may be
// active per thread; ops record themselves while a tape is active and any
// input requires grad.
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    // Seeds d(loss)/d(loss)=1 and sweeps the tape once. The loss must be a
    // scalar; calling backward twice on the same tape is an error.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }
    static GradTape* active();

private:
    void record(std::shared_ptr<detail::Node> node);
    std::vector<std::shared_ptr<detail::Node>> nodes_;
    bool used_ = false;

    friend Tensor make_op(const char* name, std::vector<int64_t> shape, std::vector<double> data,
                          const std::vector<Tensor>& inputs,
                          std::function<void(detail::Node&)> backward);
};

void backward(const Tensor& loss, GradTape& tape);

// --- op set -----------------------------------------------------------------
// 1-D operands in matmul are promoted to a row (lhs) or column (rhs); the
// promoted axis is dropped from the result shape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);

// add/sub broadcast a rank-1 rhs across rows of a rank-2 lhs, and a scalar
// over anything. mul/div accept equal shapes or a scalar rhs.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor concat(const Tensor& a, const Tensor& b);  // rank-1 append or column-wise for rank 2
Tensor tile_rows(const Tensor& v, int64_t rows);  // rank-1 n -> rows x n

// Attention pooling: out[d] = sum_i w[i] * v[i,d], accumulated in sorted order
// so the result is bit-identical under any permutation of the rows.
Tensor attn_pool(const Tensor& w, const Tensor& v);

Tensor relu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);  // gradient is zero where clamped
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);

// axis = -1 means the last axis. Group sums use sorted accumulation, making
// softmax over a candidate axis permutation-invariant bitwise.
Tensor softmax(const Tensor& a, int axis = -1);
Tensor log_softmax(const Tensor& a, int axis = -1);

Tensor sum(const Tensor& a);       // scalar
Tensor sum_rows(const Tensor& a);  // rank-2 m x n -> rank-1 m
Tensor mean(const Tensor& a);      // scalar

// Sum of doubles that is invariant to the input order: addends are sorted by
// value before accumulation.
double stable_sum(std::span<const double> values);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function at x. The finite-difference side never touches
// the tape, so it is an independent oracle for the backward pass.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5);

}  // namespace diffret
