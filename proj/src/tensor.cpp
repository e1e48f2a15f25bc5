#include "diffret/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "diffret/errors.hpp"

namespace diffret {

namespace {

thread_local GradTape* g_active_tape = nullptr;

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ContractError("tensor shape has negative dimension");
        n *= d;
    }
    return n;
}

void check_finite(const char* op, std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
        }
    }
}

std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ContractError(std::string(op) + ": dimension mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
}

}  // namespace

double stable_sum(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double acc = 0.0;
    for (double v : sorted) acc += v;
    return acc;
}

// --- Tensor -----------------------------------------------------------------

Tensor make_op(const char* name, std::vector<int64_t> shape, std::vector<double> data,
               const std::vector<Tensor>& inputs, std::function<void(detail::Node&)> backward) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ContractError(std::string(name) + ": shape/data size mismatch");
    }
    check_finite(name, data);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);

    GradTape* tape = g_active_tape;
    bool needs_grad = false;
    if (tape != nullptr) {
        for (const auto& in : inputs) {
            if (in.defined() && in.requires_grad()) {
                needs_grad = true;
                break;
            }
        }
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::move(backward);
        tape->record(node);
    }
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ContractError("tensor: shape/data size mismatch");
    }
    check_finite("from", data);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::one_hot(int64_t n, int64_t index) {
    if (index < 0 || index >= n) throw ContractError("one_hot: index out of range");
    std::vector<double> d(static_cast<size_t>(n), 0.0);
    d[static_cast<size_t>(index)] = 1.0;
    return from({n}, std::move(d));
}

Tensor Tensor::identity(int64_t n) {
    std::vector<double> d(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) d[static_cast<size_t>(i * n + i)] = 1.0;
    return from({n, n}, std::move(d));
}

Tensor Tensor::param(std::vector<int64_t> shape, std::vector<double> data) {
    Tensor t = from(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
}

const std::vector<int64_t>& Tensor::shape() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->shape;
}

int64_t Tensor::numel() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->numel();
}

int64_t Tensor::dim(int axis) const {
    const auto& s = shape();
    if (axis < 0 || static_cast<size_t>(axis) >= s.size()) {
        throw ContractError("tensor: axis out of range");
    }
    return s[static_cast<size_t>(axis)];
}

std::span<const double> Tensor::data() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->data;
}

std::span<const double> Tensor::grad() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return node_->grad;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item(): tensor is not a scalar");
    return node_->data[0];
}

double Tensor::at(int64_t i) const {
    if (rank() != 1) throw ContractError("at(i): tensor is not rank 1");
    return node_->data[static_cast<size_t>(i)];
}

double Tensor::at(int64_t i, int64_t j) const {
    if (rank() != 2) throw ContractError("at(i,j): tensor is not rank 2");
    return node_->data[static_cast<size_t>(i * dim(1) + j)];
}

// --- GradTape ---------------------------------------------------------------

GradTape::GradTape() {
    if (g_active_tape != nullptr) {
        throw ContractError("GradTape: a tape is already active on this thread");
    }
    g_active_tape = this;
}

GradTape::~GradTape() {
    if (g_active_tape == this) g_active_tape = nullptr;
}

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }

void GradTape::backward(const Tensor& loss) {
    if (used_) throw ContractError("GradTape: backward called twice without a new forward pass");
    used_ = true;
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar");
    }

    // Zero every grad this sweep may touch: recorded nodes and their leaves.
    for (const auto& node : nodes_) {
        node->grad.assign(node->data.size(), 0.0);
        for (const auto& in : node->inputs) {
            if (in && in->requires_grad) in->grad.assign(in->data.size(), 0.0);
        }
    }

    auto loss_node = loss.node();
    if (!loss_node->requires_grad) return;  // constant loss: all grads stay zero
    loss_node->grad.assign(1, 1.0);

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        detail::Node& node = **it;
        if (node.backward) node.backward(node);
    }

    for (const auto& node : nodes_) {
        for (const auto& in : node->inputs) {
            if (in && in->requires_grad && in->inputs.empty()) {
                check_finite("backward", in->grad);
            }
        }
    }
}

void backward(const Tensor& loss, GradTape& tape) { tape.backward(loss); }

// --- ops --------------------------------------------------------------------

namespace {

// Shared matmul kernel over row-major buffers: out(m x n) = a(m x k) * b(k x n).
void mm_kernel(std::span<const double> a, std::span<const double> b, std::span<double> out,
               int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        double* out_row = out.data() + i * n;
        for (int64_t j = 0; j < n; ++j) out_row[j] = 0.0;
        for (int64_t p = 0; p < k; ++p) {
            const double av = a[static_cast<size_t>(i * k + p)];
            const double* b_row = b.data() + p * n;
            for (int64_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
        }
    }
}

struct MatShape {
    int64_t rows, cols;
    bool promoted;  // original operand was rank 1
};

MatShape as_matrix(const Tensor& t, bool lhs) {
    if (t.rank() == 2) return {t.dim(0), t.dim(1), false};
    if (t.rank() == 1) {
        // lhs vector is a row, rhs vector is a column
        return lhs ? MatShape{1, t.dim(0), true} : MatShape{t.dim(0), 1, true};
    }
    throw ContractError("matmul: operands must be rank 1 or 2");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const MatShape ma = as_matrix(a, true);
    const MatShape mb = as_matrix(b, false);
    if (ma.cols != mb.rows) dim_error("matmul", a, b);
    const int64_t m = ma.rows, k = ma.cols, n = mb.cols;

    std::vector<double> out(static_cast<size_t>(m * n));
    mm_kernel(a.data(), b.data(), out, m, k, n);

    std::vector<int64_t> shape;
    if (!ma.promoted) shape.push_back(m);
    if (!mb.promoted) shape.push_back(n);

    return make_op("matmul", std::move(shape), std::move(out), {a, b},
                   [m, k, n](detail::Node& node) {
                       const auto& ain = node.inputs[0];
                       const auto& bin = node.inputs[1];
                       const auto& g = node.grad;
                       if (ain->requires_grad) {
                           // dA[i,p] += sum_j G[i,j] * B[p,j]
                           for (int64_t i = 0; i < m; ++i) {
                               for (int64_t p = 0; p < k; ++p) {
                                   double acc = 0.0;
                                   for (int64_t j = 0; j < n; ++j) {
                                       acc += g[static_cast<size_t>(i * n + j)] *
                                              bin->data[static_cast<size_t>(p * n + j)];
                                   }
                                   ain->grad[static_cast<size_t>(i * k + p)] += acc;
                               }
                           }
                       }
                       if (bin->requires_grad) {
                           // dB[p,j] += sum_i A[i,p] * G[i,j]
                           for (int64_t p = 0; p < k; ++p) {
                               for (int64_t i = 0; i < m; ++i) {
                                   const double av = ain->data[static_cast<size_t>(i * k + p)];
                                   for (int64_t j = 0; j < n; ++j) {
                                       bin->grad[static_cast<size_t>(p * n + j)] +=
                                           av * g[static_cast<size_t>(i * n + j)];
                                   }
                               }
                           }
                       }
                   });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ContractError("transpose: tensor is not rank 2");
    const int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<size_t>(m * n));
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            out[static_cast<size_t>(j * m + i)] = a.data()[static_cast<size_t>(i * n + j)];
        }
    }
    return make_op("transpose", {n, m}, std::move(out), {a}, [m, n](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (int64_t j = 0; j < n; ++j) {
            for (int64_t i = 0; i < m; ++i) {
                in->grad[static_cast<size_t>(i * n + j)] += node.grad[static_cast<size_t>(j * m + i)];
            }
        }
    });
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
    if (shape_numel(shape) != a.numel()) throw ContractError("reshape: element count mismatch");
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_op("reshape", std::move(shape), std::move(out), {a}, [](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (size_t i = 0; i < node.grad.size(); ++i) in->grad[i] += node.grad[i];
    });
}

namespace {

enum class BroadcastKind { Same, RowVector, Scalar };

BroadcastKind broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return BroadcastKind::Same;
    if (b.numel() == 1 && b.rank() <= 1) return BroadcastKind::Scalar;
    if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) return BroadcastKind::RowVector;
    dim_error(op, a, b);
}

}  // namespace

namespace {

Tensor add_sub(const char* name, const Tensor& a, const Tensor& b, double sign) {
    const BroadcastKind kind = broadcast_kind(name, a, b);
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    switch (kind) {
        case BroadcastKind::Same:
            for (size_t i = 0; i < out.size(); ++i) out[i] += sign * bd[i];
            break;
        case BroadcastKind::Scalar:
            for (auto& v : out) v += sign * bd[0];
            break;
        case BroadcastKind::RowVector: {
            const int64_t rows = a.dim(0), cols = a.dim(1);
            for (int64_t i = 0; i < rows; ++i) {
                for (int64_t j = 0; j < cols; ++j) {
                    out[static_cast<size_t>(i * cols + j)] += sign * bd[static_cast<size_t>(j)];
                }
            }
            break;
        }
    }
    return make_op(name, a.shape(), std::move(out), {a, b}, [kind, sign](detail::Node& node) {
        const auto& ain = node.inputs[0];
        const auto& bin = node.inputs[1];
        if (ain->requires_grad) {
            for (size_t i = 0; i < node.grad.size(); ++i) ain->grad[i] += node.grad[i];
        }
        if (bin->requires_grad) {
            switch (kind) {
                case BroadcastKind::Same:
                    for (size_t i = 0; i < node.grad.size(); ++i) bin->grad[i] += sign * node.grad[i];
                    break;
                case BroadcastKind::Scalar:
                    for (double g : node.grad) bin->grad[0] += sign * g;
                    break;
                case BroadcastKind::RowVector: {
                    const int64_t cols = static_cast<int64_t>(bin->data.size());
                    const int64_t rows = static_cast<int64_t>(node.grad.size()) / cols;
                    for (int64_t i = 0; i < rows; ++i) {
                        for (int64_t j = 0; j < cols; ++j) {
                            bin->grad[static_cast<size_t>(j)] +=
                                sign * node.grad[static_cast<size_t>(i * cols + j)];
                        }
                    }
                    break;
                }
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_sub("add", a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_sub("sub", a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
    const BroadcastKind kind = broadcast_kind("mul", a, b);
    if (kind == BroadcastKind::RowVector) dim_error("mul", a, b);
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    if (kind == BroadcastKind::Same) {
        for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    } else {
        for (auto& v : out) v *= bd[0];
    }
    return make_op("mul", a.shape(), std::move(out), {a, b}, [kind](detail::Node& node) {
        const auto& ain = node.inputs[0];
        const auto& bin = node.inputs[1];
        if (kind == BroadcastKind::Same) {
            for (size_t i = 0; i < node.grad.size(); ++i) {
                if (ain->requires_grad) ain->grad[i] += node.grad[i] * bin->data[i];
                if (bin->requires_grad) bin->grad[i] += node.grad[i] * ain->data[i];
            }
        } else {
            for (size_t i = 0; i < node.grad.size(); ++i) {
                if (ain->requires_grad) ain->grad[i] += node.grad[i] * bin->data[0];
                if (bin->requires_grad) bin->grad[0] += node.grad[i] * ain->data[i];
            }
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    const BroadcastKind kind = broadcast_kind("div", a, b);
    if (kind == BroadcastKind::RowVector) dim_error("div", a, b);
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bd = b.data();
    if (kind == BroadcastKind::Same) {
        for (size_t i = 0; i < out.size(); ++i) out[i] /= bd[i];
    } else {
        for (auto& v : out) v /= bd[0];
    }
    return make_op("div", a.shape(), std::move(out), {a, b}, [kind](detail::Node& node) {
        const auto& ain = node.inputs[0];
        const auto& bin = node.inputs[1];
        for (size_t i = 0; i < node.grad.size(); ++i) {
            const double bv = (kind == BroadcastKind::Same) ? bin->data[i] : bin->data[0];
            if (ain->requires_grad) ain->grad[i] += node.grad[i] / bv;
            if (bin->requires_grad) {
                const double db = -node.grad[i] * ain->data[i] / (bv * bv);
                bin->grad[(kind == BroadcastKind::Same) ? i : 0] += db;
            }
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= c;
    return make_op("scale", a.shape(), std::move(out), {a}, [c](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (size_t i = 0; i < node.grad.size(); ++i) in->grad[i] += c * node.grad[i];
    });
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() == 1 && b.rank() == 1) {
        std::vector<double> out;
        out.reserve(static_cast<size_t>(a.numel() + b.numel()));
        out.insert(out.end(), a.data().begin(), a.data().end());
        out.insert(out.end(), b.data().begin(), b.data().end());
        const int64_t na = a.numel();
        return make_op("concat", {a.numel() + b.numel()}, std::move(out), {a, b},
                       [na](detail::Node& node) {
                           const auto& ain = node.inputs[0];
                           const auto& bin = node.inputs[1];
                           for (size_t i = 0; i < node.grad.size(); ++i) {
                               if (static_cast<int64_t>(i) < na) {
                                   if (ain->requires_grad) ain->grad[i] += node.grad[i];
                               } else if (bin->requires_grad) {
                                   bin->grad[i - static_cast<size_t>(na)] += node.grad[i];
                               }
                           }
                       });
    }
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) dim_error("concat", a, b);
    const int64_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    std::vector<double> out(static_cast<size_t>(rows * (ca + cb)));
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < ca; ++j) {
            out[static_cast<size_t>(i * (ca + cb) + j)] = a.data()[static_cast<size_t>(i * ca + j)];
        }
        for (int64_t j = 0; j < cb; ++j) {
            out[static_cast<size_t>(i * (ca + cb) + ca + j)] =
                b.data()[static_cast<size_t>(i * cb + j)];
        }
    }
    return make_op("concat", {rows, ca + cb}, std::move(out), {a, b},
                   [rows, ca, cb](detail::Node& node) {
                       const auto& ain = node.inputs[0];
                       const auto& bin = node.inputs[1];
                       for (int64_t i = 0; i < rows; ++i) {
                           if (ain->requires_grad) {
                               for (int64_t j = 0; j < ca; ++j) {
                                   ain->grad[static_cast<size_t>(i * ca + j)] +=
                                       node.grad[static_cast<size_t>(i * (ca + cb) + j)];
                               }
                           }
                           if (bin->requires_grad) {
                               for (int64_t j = 0; j < cb; ++j) {
                                   bin->grad[static_cast<size_t>(i * cb + j)] +=
                                       node.grad[static_cast<size_t>(i * (ca + cb) + ca + j)];
                               }
                           }
                       }
                   });
}

Tensor tile_rows(const Tensor& v, int64_t rows) {
    if (v.rank() != 1) throw ContractError("tile_rows: tensor is not rank 1");
    if (rows < 1) throw ContractError("tile_rows: rows must be >= 1");
    const int64_t n = v.dim(0);
    std::vector<double> out(static_cast<size_t>(rows * n));
    for (int64_t i = 0; i < rows; ++i) {
        std::copy(v.data().begin(), v.data().end(), out.begin() + i * n);
    }
    return make_op("tile_rows", {rows, n}, std::move(out), {v}, [rows, n](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < n; ++j) {
                in->grad[static_cast<size_t>(j)] += node.grad[static_cast<size_t>(i * n + j)];
            }
        }
    });
}

Tensor attn_pool(const Tensor& w, const Tensor& v) {
    if (w.rank() != 1 || v.rank() != 2 || w.dim(0) != v.dim(0)) dim_error("attn_pool", w, v);
    const int64_t n = v.dim(0), d = v.dim(1);
    std::vector<double> out(static_cast<size_t>(d));
    std::vector<double> terms(static_cast<size_t>(n));
    for (int64_t j = 0; j < d; ++j) {
        for (int64_t i = 0; i < n; ++i) {
            terms[static_cast<size_t>(i)] =
                w.data()[static_cast<size_t>(i)] * v.data()[static_cast<size_t>(i * d + j)];
        }
        out[static_cast<size_t>(j)] = stable_sum(terms);
    }
    return make_op("attn_pool", {d}, std::move(out), {w, v}, [n, d](detail::Node& node) {
        const auto& win = node.inputs[0];
        const auto& vin = node.inputs[1];
        for (int64_t i = 0; i < n; ++i) {
            if (win->requires_grad) {
                double acc = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    acc += node.grad[static_cast<size_t>(j)] * vin->data[static_cast<size_t>(i * d + j)];
                }
                win->grad[static_cast<size_t>(i)] += acc;
            }
            if (vin->requires_grad) {
                const double wv = win->data[static_cast<size_t>(i)];
                for (int64_t j = 0; j < d; ++j) {
                    vin->grad[static_cast<size_t>(i * d + j)] += wv * node.grad[static_cast<size_t>(j)];
                }
            }
        }
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return make_op("relu", a.shape(), std::move(out), {a}, [](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (size_t i = 0; i < node.grad.size(); ++i) {
            if (in->data[i] > 0.0) in->grad[i] += node.grad[i];
        }
    });
}

Tensor clamp_min(const Tensor& a, double lo) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = v < lo ? lo : v;
    return make_op("clamp_min", a.shape(), std::move(out), {a}, [lo](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (size_t i = 0; i < node.grad.size(); ++i) {
            if (in->data[i] >= lo) in->grad[i] += node.grad[i];
        }
    });
}

Tensor log(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = std::log(v);
    return make_op("log", a.shape(), std::move(out), {a}, [](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (size_t i = 0; i < node.grad.size(); ++i) in->grad[i] += node.grad[i] / in->data[i];
    });
}

Tensor exp(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = std::exp(v);
    return make_op("exp", a.shape(), std::move(out), {a}, [](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (size_t i = 0; i < node.grad.size(); ++i) in->grad[i] += node.grad[i] * node.data[i];
    });
}

Tensor sqrt(const Tensor& a) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = std::sqrt(v);
    return make_op("sqrt", a.shape(), std::move(out), {a}, [](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (size_t i = 0; i < node.grad.size(); ++i) {
            in->grad[i] += node.grad[i] / (2.0 * node.data[i]);
        }
    });
}

namespace {

struct AxisView {
    int64_t groups;  // number of independent softmax groups
    int64_t len;     // elements per group
    int64_t stride;  // distance between consecutive elements of one group
    int64_t base;    // distance between group starts
};

AxisView axis_view(const char* op, const Tensor& a, int axis) {
    if (a.rank() == 1) return {1, a.dim(0), 1, 0};
    if (a.rank() == 2) {
        const int64_t m = a.dim(0), n = a.dim(1);
        const int resolved = axis < 0 ? 1 : axis;
        if (resolved == 1) return {m, n, 1, n};  // along rows
        if (resolved == 0) return {n, m, n, 1};  // along columns
        throw ContractError(std::string(op) + ": axis out of range");
    }
    throw ContractError(std::string(op) + ": tensor must be rank 1 or 2");
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
    const AxisView v = axis_view("softmax", a, axis);
    std::vector<double> out(a.data().begin(), a.data().end());
    std::vector<double> exps(static_cast<size_t>(v.len));
    for (int64_t g = 0; g < v.groups; ++g) {
        double* base = out.data() + g * v.base;
        double mx = base[0];
        for (int64_t i = 1; i < v.len; ++i) mx = std::max(mx, base[i * v.stride]);
        for (int64_t i = 0; i < v.len; ++i) {
            exps[static_cast<size_t>(i)] = std::exp(base[i * v.stride] - mx);
        }
        const double denom = stable_sum(exps);
        for (int64_t i = 0; i < v.len; ++i) base[i * v.stride] = exps[static_cast<size_t>(i)] / denom;
    }
    return make_op("softmax", a.shape(), std::move(out), {a}, [v](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (int64_t g = 0; g < v.groups; ++g) {
            const int64_t off = g * v.base;
            double dot = 0.0;
            for (int64_t i = 0; i < v.len; ++i) {
                const auto idx = static_cast<size_t>(off + i * v.stride);
                dot += node.data[idx] * node.grad[idx];
            }
            for (int64_t i = 0; i < v.len; ++i) {
                const auto idx = static_cast<size_t>(off + i * v.stride);
                in->grad[idx] += node.data[idx] * (node.grad[idx] - dot);
            }
        }
    });
}

Tensor log_softmax(const Tensor& a, int axis) {
    const AxisView v = axis_view("log_softmax", a, axis);
    std::vector<double> out(a.data().begin(), a.data().end());
    std::vector<double> exps(static_cast<size_t>(v.len));
    for (int64_t g = 0; g < v.groups; ++g) {
        double* base = out.data() + g * v.base;
        double mx = base[0];
        for (int64_t i = 1; i < v.len; ++i) mx = std::max(mx, base[i * v.stride]);
        for (int64_t i = 0; i < v.len; ++i) {
            exps[static_cast<size_t>(i)] = std::exp(base[i * v.stride] - mx);
        }
        const double lse = mx + std::log(stable_sum(exps));
        for (int64_t i = 0; i < v.len; ++i) base[i * v.stride] -= lse;
    }
    return make_op("log_softmax", a.shape(), std::move(out), {a}, [v](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (int64_t g = 0; g < v.groups; ++g) {
            const int64_t off = g * v.base;
            double gsum = 0.0;
            for (int64_t i = 0; i < v.len; ++i) {
                gsum += node.grad[static_cast<size_t>(off + i * v.stride)];
            }
            for (int64_t i = 0; i < v.len; ++i) {
                const auto idx = static_cast<size_t>(off + i * v.stride);
                in->grad[idx] += node.grad[idx] - std::exp(node.data[idx]) * gsum;
            }
        }
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return make_op("sum", {}, {acc}, {a}, [](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (auto& g : in->grad) g += node.grad[0];
    });
}

Tensor sum_rows(const Tensor& a) {
    if (a.rank() != 2) throw ContractError("sum_rows: tensor is not rank 2");
    const int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<size_t>(m), 0.0);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            out[static_cast<size_t>(i)] += a.data()[static_cast<size_t>(i * n + j)];
        }
    }
    return make_op("sum_rows", {m}, std::move(out), {a}, [m, n](detail::Node& node) {
        const auto& in = node.inputs[0];
        if (!in->requires_grad) return;
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < n; ++j) {
                in->grad[static_cast<size_t>(i * n + j)] += node.grad[static_cast<size_t>(i)];
            }
        }
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");

    std::vector<double> analytic;
    {
        GradTape tape;
        Tensor xp = Tensor::param(x.shape(), {x.data().begin(), x.data().end()});
        Tensor loss = f(xp);
        if (loss.numel() != 1) throw ContractError("grad_check: f must return a scalar");
        tape.backward(loss);
        analytic.assign(xp.grad().begin(), xp.grad().end());
        if (analytic.empty()) analytic.assign(x.data().size(), 0.0);
    }

    double max_err = 0.0;
    std::vector<double> values(x.data().begin(), x.data().end());
    for (size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + eps;
        const double up = f(Tensor::from(x.shape(), values)).item();
        values[i] = orig - eps;
        const double down = f(Tensor::from(x.shape(), values)).item();
        values[i] = orig;
        const double fd = (up - down) / (2.0 * eps);
        const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace diffret
