#include "ticketlab/tensor.hpp"

#include "ticketlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ticketlab {

namespace {

thread_local uint64_t g_seq_counter = 0;
thread_local OpStats g_op_stats;

size_t shape_product(const std::vector<size_t>& shape) {
    size_t p = 1;
    for (size_t d : shape) p *= d;
    return p;
}

std::shared_ptr<TensorNode> make_node(std::vector<size_t> shape, std::vector<double> values,
                                      bool requires_grad) {
    if (shape_product(shape) != values.size())
        throw std::invalid_argument("tensor: shape does not match value count");
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    n->seq = ++g_seq_counter;
    return n;
}

void require_2d(const Tensor& t, const char* who) {
    if (!t.defined() || t.ndim() != 2)
        throw std::invalid_argument(std::string(who) + ": expected a 2-D tensor");
}

void require_defined(const Tensor& t, const char* who) {
    if (!t.defined()) throw std::invalid_argument(std::string(who) + ": undefined tensor");
}

} // namespace

void TensorNode::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

OpStats& op_stats() { return g_op_stats; }

// ---- Tensor handle --------------------------------------------------------

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
    size_t n = shape_product(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
    size_t n = shape_product(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(std::vector<size_t> shape, std::vector<double> values,
                           bool requires_grad) {
    return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_node({1}, {value}, requires_grad));
}

Tensor Tensor::randn(std::vector<size_t> shape, Rng& rng, double stddev, bool requires_grad) {
    size_t n = shape_product(shape);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor(make_node(std::move(shape), std::move(v), requires_grad));
}

const std::vector<size_t>& Tensor::shape() const { return node_->shape; }
size_t Tensor::size() const { return node_->values.size(); }
size_t Tensor::ndim() const { return node_->shape.size(); }

size_t Tensor::rows() const {
    require_2d(*this, "rows()");
    return node_->shape[0];
}

size_t Tensor::cols() const {
    require_2d(*this, "cols()");
    return node_->shape[1];
}

std::vector<double>& Tensor::values() { return node_->values; }
const std::vector<double>& Tensor::values() const { return node_->values; }

double Tensor::value() const {
    if (!defined() || size() != 1) throw std::invalid_argument("value(): tensor is not scalar");
    return node_->values[0];
}

double Tensor::at(size_t r, size_t c) const { return node_->values[r * cols() + c]; }
double& Tensor::at(size_t r, size_t c) { return node_->values[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    return *this;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::vector<double>& Tensor::grad() {
    node_->ensure_grad();
    return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!defined() || node_->grad.empty()) throw std::runtime_error("grad(): no gradient present");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (defined() && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    require_defined(*this, "detach()");
    return Tensor(make_node(node_->shape, node_->values, false));
}

void Tensor::backward() const {
    if (!defined() || size() != 1)
        throw std::invalid_argument("backward(): loss must be a defined scalar tensor");

    // Creation order is already topological (an op's parents precede it),
    // so visiting the reachable subgraph in decreasing seq is a valid
    // reverse-topological schedule and runs every gradient rule once.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });

    // Interior grads are per-pass scratch; only leaves accumulate across calls.
    for (TensorNode* n : order)
        if (n->backward_fn) n->grad.assign(n->values.size(), 0.0);

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (TensorNode* n : order)
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
}

// ---- op construction ------------------------------------------------------

Tensor make_op_tensor(std::vector<size_t> shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn) {
    bool needs = false;
    for (const auto& p : parents)
        if (p.defined() && p.requires_grad()) { needs = true; break; }
    auto node = make_node(std::move(shape), std::move(values), needs);
    if (needs) {
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node_);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(node);
}

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("matmul: inner dimensions disagree");

    std::vector<double> out(m * n, 0.0);
    {
        const double* A = a.values().data();
        const double* B = b.values().data();
        double* C = out.data();
        for (size_t i = 0; i < m; ++i) {
            const double* arow = A + i * k;
            double* crow = C + i * n;
            for (size_t p = 0; p < k; ++p) {
                const double aik = arow[p];
                if (aik == 0.0) continue;
                const double* brow = B + p * n;
                for (size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
        }
    }
    g_op_stats.matmuls += 1;
    g_op_stats.fused_multiply_adds += static_cast<uint64_t>(m) * k * n;

    auto pa = a.node(), pb = b.node();
    return make_op_tensor(
        {m, n}, std::move(out), {a, b},
        [pa, pb, m, k, n](TensorNode& self) {
            const double* dC = self.grad.data();
            if (pa->requires_grad) {
                pa->ensure_grad();
                const double* B = pb->values.data();
                double* dA = pa->grad.data();
                for (size_t i = 0; i < m; ++i) {
                    const double* dcrow = dC + i * n;
                    double* darow = dA + i * k;
                    for (size_t p = 0; p < k; ++p) {
                        const double* brow = B + p * n;
                        double acc = 0.0;
                        for (size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
                        darow[p] += acc;
                    }
                }
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                const double* A = pa->values.data();
                double* dB = pb->grad.data();
                for (size_t i = 0; i < m; ++i) {
                    const double* arow = A + i * k;
                    const double* dcrow = dC + i * n;
                    for (size_t p = 0; p < k; ++p) {
                        const double aik = arow[p];
                        if (aik == 0.0) continue;
                        double* dbrow = dB + p * n;
                        for (size_t j = 0; j < n; ++j) dbrow[j] += aik * dcrow[j];
                    }
                }
            }
        });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
    auto pa = a.node();
    return make_op_tensor({c, r}, std::move(out), {a},
                          [pa, r, c](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              for (size_t i = 0; i < r; ++i)
                                  for (size_t j = 0; j < c; ++j)
                                      pa->grad[i * c + j] += self.grad[j * r + i];
                          });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined(a, "add");
    require_defined(b, "add");
    if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto pa = a.node(), pb = b.node();
    return make_op_tensor(a.shape(), std::move(out), {a, b},
                          [pa, pb](TensorNode& self) {
                              if (pa->requires_grad) {
                                  pa->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      pa->grad[i] += self.grad[i];
                              }
                              if (pb->requires_grad) {
                                  pb->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      pb->grad[i] += self.grad[i];
                              }
                          });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    require_2d(a, "add_rowvec");
    require_defined(row, "add_rowvec");
    const size_t r = a.rows(), c = a.cols();
    if (row.size() != c) throw std::invalid_argument("add_rowvec: row length mismatch");
    std::vector<double> out(r * c);
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] + row.values()[j];
    auto pa = a.node(), pr = row.node();
    return make_op_tensor({r, c}, std::move(out), {a, row},
                          [pa, pr, r, c](TensorNode& self) {
                              if (pa->requires_grad) {
                                  pa->ensure_grad();
                                  for (size_t i = 0; i < r * c; ++i) pa->grad[i] += self.grad[i];
                              }
                              if (pr->requires_grad) {
                                  pr->ensure_grad();
                                  for (size_t i = 0; i < r; ++i)
                                      for (size_t j = 0; j < c; ++j)
                                          pr->grad[j] += self.grad[i * c + j];
                              }
                          });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined(a, "mul");
    require_defined(b, "mul");
    if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto pa = a.node(), pb = b.node();
    return make_op_tensor(a.shape(), std::move(out), {a, b},
                          [pa, pb](TensorNode& self) {
                              if (pa->requires_grad) {
                                  pa->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      pa->grad[i] += self.grad[i] * pb->values[i];
                              }
                              if (pb->requires_grad) {
                                  pb->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      pb->grad[i] += self.grad[i] * pa->values[i];
                              }
                          });
}

Tensor scale(const Tensor& a, double c) {
    require_defined(a, "scale");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    auto pa = a.node();
    return make_op_tensor(a.shape(), std::move(out), {a},
                          [pa, c](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                  pa->grad[i] += self.grad[i] * c;
                          });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    require_defined(a, "mul_scalar");
    if (!s.defined() || s.size() != 1)
        throw std::invalid_argument("mul_scalar: scale must be a 1-element tensor");
    const double sv = s.values()[0];
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * sv;
    auto pa = a.node(), ps = s.node();
    return make_op_tensor(a.shape(), std::move(out), {a, s},
                          [pa, ps, sv](TensorNode& self) {
                              if (pa->requires_grad) {
                                  pa->ensure_grad();
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      pa->grad[i] += self.grad[i] * sv;
                              }
                              if (ps->requires_grad) {
                                  ps->ensure_grad();
                                  double acc = 0.0;
                                  for (size_t i = 0; i < self.grad.size(); ++i)
                                      acc += self.grad[i] * pa->values[i];
                                  ps->grad[0] += acc;
                              }
                          });
}

Tensor softmax(const Tensor& t, size_t axis) {
    require_defined(t, "softmax");
    if (axis >= t.ndim()) throw std::invalid_argument("softmax: axis out of range");
    const auto& shape = t.shape();
    const size_t dim = shape[axis];
    size_t inner = 1;
    for (size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
    const size_t slices = t.size() / dim;

    std::vector<double> out(t.size());
    const double* x = t.values().data();
    for (size_t s = 0; s < slices; ++s) {
        const size_t base = (s / inner) * dim * inner + (s % inner);
        double mx = x[base];
        for (size_t u = 1; u < dim; ++u) mx = std::max(mx, x[base + u * inner]);
        double z = 0.0;
        for (size_t u = 0; u < dim; ++u) {
            const double e = std::exp(x[base + u * inner] - mx);
            out[base + u * inner] = e;
            z += e;
        }
        for (size_t u = 0; u < dim; ++u) out[base + u * inner] /= z;
    }

    auto pt = t.node();
    return make_op_tensor(shape, std::move(out), {t},
                          [pt, dim, inner, slices](TensorNode& self) {
                              if (!pt->requires_grad) return;
                              pt->ensure_grad();
                              const double* y = self.values.data();
                              const double* dy = self.grad.data();
                              for (size_t s = 0; s < slices; ++s) {
                                  const size_t base = (s / inner) * dim * inner + (s % inner);
                                  double dot = 0.0;
                                  for (size_t u = 0; u < dim; ++u) {
                                      const size_t ix = base + u * inner;
                                      dot += dy[ix] * y[ix];
                                  }
                                  for (size_t u = 0; u < dim; ++u) {
                                      const size_t ix = base + u * inner;
                                      pt->grad[ix] += y[ix] * (dy[ix] - dot);
                                  }
                              }
                          });
}

Tensor layer_norm(const Tensor& t, const Tensor& gain, const Tensor& bias, double eps) {
    require_defined(t, "layer_norm");
    require_defined(gain, "layer_norm");
    require_defined(bias, "layer_norm");
    if (t.ndim() == 0) throw std::invalid_argument("layer_norm: scalar input");
    const size_t d = t.shape().back();
    if (gain.size() != d || bias.size() != d)
        throw std::invalid_argument("layer_norm: gain/bias length must match last axis");
    const size_t rows = t.size() / d;

    std::vector<double> out(t.size());
    std::vector<double> mu(rows), inv_s(rows);
    const double* x = t.values().data();
    const double* g = gain.values().data();
    const double* b = bias.values().data();
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * d;
        double m = 0.0;
        for (size_t j = 0; j < d; ++j) m += xr[j];
        m /= static_cast<double>(d);
        double v = 0.0;
        for (size_t j = 0; j < d; ++j) {
            const double c = xr[j] - m;
            v += c * c;
        }
        v /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(v + eps);
        mu[r] = m;
        inv_s[r] = is;
        double* orow = out.data() + r * d;
        for (size_t j = 0; j < d; ++j) orow[j] = (xr[j] - m) * is * g[j] + b[j];
    }

    auto pt = t.node(), pg = gain.node(), pb = bias.node();
    return make_op_tensor(
        t.shape(), std::move(out), {t, gain, bias},
        [pt, pg, pb, rows, d, mu = std::move(mu), inv_s = std::move(inv_s)](TensorNode& self) {
            const double* dy = self.grad.data();
            const double* x = pt->values.data();
            const double* g = pg->values.data();
            std::vector<double> xhat(d), dxh(d);
            if (pt->requires_grad) pt->ensure_grad();
            if (pg->requires_grad) pg->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            for (size_t r = 0; r < rows; ++r) {
                const double* xr = x + r * d;
                const double* dyr = dy + r * d;
                const double is = inv_s[r];
                for (size_t j = 0; j < d; ++j) xhat[j] = (xr[j] - mu[r]) * is;
                if (pg->requires_grad)
                    for (size_t j = 0; j < d; ++j) pg->grad[j] += dyr[j] * xhat[j];
                if (pb->requires_grad)
                    for (size_t j = 0; j < d; ++j) pb->grad[j] += dyr[j];
                if (pt->requires_grad) {
                    double mean_dxh = 0.0, mean_dxh_xhat = 0.0;
                    for (size_t j = 0; j < d; ++j) {
                        dxh[j] = dyr[j] * g[j];
                        mean_dxh += dxh[j];
                        mean_dxh_xhat += dxh[j] * xhat[j];
                    }
                    mean_dxh /= static_cast<double>(d);
                    mean_dxh_xhat /= static_cast<double>(d);
                    double* dxr = pt->grad.data() + r * d;
                    for (size_t j = 0; j < d; ++j)
                        dxr[j] += is * (dxh[j] - mean_dxh - xhat[j] * mean_dxh_xhat);
                }
            }
        });
}

Tensor gelu(const Tensor& a) {
    require_defined(a, "gelu");
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double x = a.values()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    auto pa = a.node();
    return make_op_tensor(a.shape(), std::move(out), {a},
                          [pa](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) {
                                  const double x = pa->values[i];
                                  const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                                  const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                                  pa->grad[i] += self.grad[i] * (cdf + x * pdf);
                              }
                          });
}

Tensor tanh_op(const Tensor& a) {
    require_defined(a, "tanh_op");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
    auto pa = a.node();
    return make_op_tensor(a.shape(), std::move(out), {a},
                          [pa](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i) {
                                  const double y = self.values[i];
                                  pa->grad[i] += self.grad[i] * (1.0 - y * y);
                              }
                          });
}

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    auto pa = a.node();
    return make_op_tensor({1}, {acc}, {a},
                          [pa](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              const double g = self.grad[0];
                              for (double& d : pa->grad) d += g;
                          });
}

Tensor mean_all(const Tensor& a) {
    require_defined(a, "mean_all");
    if (a.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    const double inv_n = 1.0 / static_cast<double>(a.size());
    auto pa = a.node();
    return make_op_tensor({1}, {acc * inv_n}, {a},
                          [pa, inv_n](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              const double g = self.grad[0] * inv_n;
                              for (double& d : pa->grad) d += g;
                          });
}

Tensor gather_rows(const Tensor& a, const std::vector<size_t>& indices) {
    require_2d(a, "gather_rows");
    const size_t c = a.cols();
    for (size_t ix : indices)
        if (ix >= a.rows()) throw std::invalid_argument("gather_rows: index out of range");
    std::vector<double> out(indices.size() * c);
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy_n(a.values().data() + indices[i] * c, c, out.data() + i * c);
    auto pa = a.node();
    return make_op_tensor({indices.size(), c}, std::move(out), {a},
                          [pa, indices, c](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              for (size_t i = 0; i < indices.size(); ++i) {
                                  const double* src = self.grad.data() + i * c;
                                  double* dst = pa->grad.data() + indices[i] * c;
                                  for (size_t j = 0; j < c; ++j) dst[j] += src[j];
                              }
                          });
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<size_t>& labels) {
    require_2d(logits, "cross_entropy_logits");
    const size_t bsz = logits.rows(), ncls = logits.cols();
    if (labels.size() != bsz)
        throw std::invalid_argument("cross_entropy_logits: one label per row required");
    for (size_t y : labels)
        if (y >= ncls) throw std::invalid_argument("cross_entropy_logits: label out of range");

    // cache the softmax for the backward rule
    std::vector<double> probs(bsz * ncls);
    double loss = 0.0;
    const double* z = logits.values().data();
    for (size_t i = 0; i < bsz; ++i) {
        const double* zr = z + i * ncls;
        double mx = zr[0];
        for (size_t j = 1; j < ncls; ++j) mx = std::max(mx, zr[j]);
        double acc = 0.0;
        for (size_t j = 0; j < ncls; ++j) {
            const double e = std::exp(zr[j] - mx);
            probs[i * ncls + j] = e;
            acc += e;
        }
        for (size_t j = 0; j < ncls; ++j) probs[i * ncls + j] /= acc;
        loss += std::log(acc) + mx - zr[labels[i]];
    }
    loss /= static_cast<double>(bsz);

    auto pl = logits.node();
    return make_op_tensor({1}, {loss}, {logits},
                          [pl, labels, probs = std::move(probs), bsz, ncls](TensorNode& self) {
                              if (!pl->requires_grad) return;
                              pl->ensure_grad();
                              const double g = self.grad[0] / static_cast<double>(bsz);
                              for (size_t i = 0; i < bsz; ++i) {
                                  double* dst = pl->grad.data() + i * ncls;
                                  const double* p = probs.data() + i * ncls;
                                  for (size_t j = 0; j < ncls; ++j) dst[j] += g * p[j];
                                  dst[labels[i]] -= g;
                              }
                          });
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    require_defined(pred, "mse");
    require_defined(target, "mse");
    if (pred.shape() != target.shape()) throw std::invalid_argument("mse: shape mismatch");
    if (pred.size() == 0) throw std::invalid_argument("mse: empty tensors");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.values()[i] - target.values()[i];
        acc += e * e;
    }
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    auto pp = pred.node(), pt = target.node();
    return make_op_tensor({1}, {acc * inv_n}, {pred, target},
                          [pp, pt, inv_n](TensorNode& self) {
                              const double g = self.grad[0] * 2.0 * inv_n;
                              for (size_t i = 0; i < pp->values.size(); ++i) {
                                  const double e = pp->values[i] - pt->values[i];
                                  if (pp->requires_grad) {
                                      pp->ensure_grad();
                                      pp->grad[i] += g * e;
                                  }
                                  if (pt->requires_grad) {
                                      pt->ensure_grad();
                                      pt->grad[i] -= g * e;
                                  }
                              }
                          });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
    require_defined(a, "dropout");
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (rate == 0.0) return a;
    const double keep = 1.0 - rate;
    const double boost = 1.0 / keep;
    std::vector<double> mask(a.size());
    for (double& m : mask) m = rng.bernoulli(keep) ? boost : 0.0;
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * mask[i];
    auto pa = a.node();
    return make_op_tensor(a.shape(), std::move(out), {a},
                          [pa, mask = std::move(mask)](TensorNode& self) {
                              if (!pa->requires_grad) return;
                              pa->ensure_grad();
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                  pa->grad[i] += self.grad[i] * mask[i];
                          });
}

bool all_finite(const Tensor& t) {
    if (!t.defined()) return false;
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double step) {
    if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

    for (Tensor p : params) {
        p.grad();  // allocate so a parameter untouched by f still reads as zero
        p.zero_grad();
    }
    Tensor loss = f();
    if (!loss.defined() || loss.size() != 1)
        throw std::invalid_argument("grad_check: f must produce a scalar loss");
    if (!std::isfinite(loss.value()))
        throw std::runtime_error("grad_check: non-finite loss at the evaluation point");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor p : params) analytic.push_back(p.grad());

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        for (size_t i = 0; i < p.size(); ++i) {
            const double saved = p.values()[i];
            p.values()[i] = saved + step;
            const double lp = f().value();
            p.values()[i] = saved - step;
            const double lm = f().value();
            p.values()[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw std::runtime_error("grad_check: non-finite loss during probing");
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[pi][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace ticketlab
