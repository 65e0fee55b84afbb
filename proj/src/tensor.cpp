#include "nmtlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace nmtlab {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

long long shape_numel(const Shape& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
}

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
    return n;
}

void validate_shape(const Shape& s) {
    for (int d : s) {
        if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(s));
    }
}


// Hooks up parents/backprop only when some input needs gradients, so pure
// inference builds no graph at all.
void record(const NodePtr& out, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
    bool needs = false;
    for (const auto& p : parents)
        if (p->needs_grad) needs = true;
    if (!needs) return;
    out->needs_grad = true;
    out->parents = std::move(parents);
    out->backprop = std::move(fn);
}

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2) throw ShapeError(std::string(what) + " requires a 2-d tensor, got " + shape_str(t.shape()));
}

// ---- raw matrix kernels (row-major) ----

// C (+)= A[m x k] * B[k x n]
void mm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (+)= A[m x k] * B^T where B is [n x k]
void mm_bt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// C (+)= A^T * B where A is [m x k], B is [m x n], C is [k x n]
void mm_at(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<size_t>(k) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        const double* brow = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace

// ---- construction ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    validate_shape(shape);
    auto n = make_node(std::move(shape));
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<long long>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::scalar_value(double v) { return from_data({1}, {v}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.values()) x = rng.normal(0.0, stddev);
    return t;
}

int Tensor::rows() const {
    require_2d(*this, "rows()");
    return n_->shape[0];
}

int Tensor::cols() const {
    require_2d(*this, "cols()");
    return n_->shape[1];
}

double& Tensor::at(int r, int c) {
    return n_->value[static_cast<size_t>(r) * n_->shape[1] + c];
}

double Tensor::at(int r, int c) const {
    return n_->value[static_cast<size_t>(r) * n_->shape[1] + c];
}

Tensor Tensor::clone_detached(bool requires_grad) const {
    return from_data(n_->shape, n_->value, requires_grad);
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node({m, n});
    mm(a.values().data(), b.values().data(), out->value.data(), m, k, n, false);
    auto an = a.node_ptr(), bn = b.node_ptr();
    record(out, {an, bn}, [an, bn, m, k, n](Node& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            mm_bt(self.grad.data(), bn->value.data(), an->grad.data(), m, n, k, true);
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            mm_at(an->value.data(), self.grad.data(), bn->grad.data(), m, k, n, true);
        }
    });
    return Tensor::wrap(out);
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto out = make_node(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    record(out, {an, bn}, [an, bn](Node& self) {
        for (auto* p : {an.get(), bn.get()}) {
            if (!p->needs_grad) continue;
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
    return Tensor::wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto out = make_node(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    record(out, {an, bn}, [an, bn](Node& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
    return Tensor::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto out = make_node(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    record(out, {an, bn}, [an, bn](Node& self) {
        if (an->needs_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
    return Tensor::wrap(out);
}

Tensor scale(const Tensor& a, double s) {
    auto out = make_node(a.shape());
    const auto& av = a.values();
    for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * s;
    auto an = a.node_ptr();
    record(out, {an}, [an, s](Node& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
    });
    return Tensor::wrap(out);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_2d(x, "add_bias");
    if (bias.ndim() != 1 || bias.dim(0) != x.cols())
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
    const int m = x.rows(), n = x.cols();
    auto out = make_node({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->value[static_cast<size_t>(i) * n + j] = x.at(i, j) + bias[j];
    auto xn = x.node_ptr(), bn = bias.node_ptr();
    record(out, {xn, bn}, [xn, bn, m, n](Node& self) {
        if (xn->needs_grad) {
            xn->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) bn->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
        }
    });
    return Tensor::wrap(out);
}

Tensor relu(const Tensor& x) {
    auto out = make_node(x.shape());
    const auto& xv = x.values();
    for (size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    auto xn = x.node_ptr();
    record(out, {xn}, [xn](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += self.grad[i];
    });
    return Tensor::wrap(out);
}

Tensor sigmoid(const Tensor& x) {
    auto out = make_node(x.shape());
    const auto& xv = x.values();
    for (size_t i = 0; i < xv.size(); ++i) out->value[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    auto xn = x.node_ptr();
    record(out, {xn}, [xn](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double y = self.value[i];
            xn->grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
    return Tensor::wrap(out);
}

Tensor tanh_op(const Tensor& x) {
    auto out = make_node(x.shape());
    const auto& xv = x.values();
    for (size_t i = 0; i < xv.size(); ++i) out->value[i] = std::tanh(xv[i]);
    auto xn = x.node_ptr();
    record(out, {xn}, [xn](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double y = self.value[i];
            xn->grad[i] += self.grad[i] * (1.0 - y * y);
        }
    });
    return Tensor::wrap(out);
}

namespace {

// Iteration scheme for a reduction axis: outer x axis x inner strides.
struct AxisIter {
    long long outer = 1, extent = 1, inner = 1;
};

AxisIter axis_iter(const Shape& s, int axis) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisIter it;
    for (int i = 0; i < axis; ++i) it.outer *= s[static_cast<size_t>(i)];
    it.extent = s[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) it.inner *= s[i];
    return it;
}

} // namespace

Tensor softmax(const Tensor& x, int axis) {
    AxisIter it = axis_iter(x.shape(), axis);
    auto out = make_node(x.shape());
    const auto& xv = x.values();
    for (long long o = 0; o < it.outer; ++o) {
        for (long long in = 0; in < it.inner; ++in) {
            const long long base = o * it.extent * it.inner + in;
            double mx = xv[static_cast<size_t>(base)];
            for (long long e = 1; e < it.extent; ++e)
                mx = std::max(mx, xv[static_cast<size_t>(base + e * it.inner)]);
            double z = 0.0;
            for (long long e = 0; e < it.extent; ++e) {
                double v = std::exp(xv[static_cast<size_t>(base + e * it.inner)] - mx);
                out->value[static_cast<size_t>(base + e * it.inner)] = v;
                z += v;
            }
            for (long long e = 0; e < it.extent; ++e) out->value[static_cast<size_t>(base + e * it.inner)] /= z;
        }
    }
    auto xn = x.node_ptr();
    record(out, {xn}, [xn, it](Node& self) {
        xn->ensure_grad();
        for (long long o = 0; o < it.outer; ++o) {
            for (long long in = 0; in < it.inner; ++in) {
                const long long base = o * it.extent * it.inner + in;
                double dot = 0.0;
                for (long long e = 0; e < it.extent; ++e) {
                    size_t idx = static_cast<size_t>(base + e * it.inner);
                    dot += self.grad[idx] * self.value[idx];
                }
                for (long long e = 0; e < it.extent; ++e) {
                    size_t idx = static_cast<size_t>(base + e * it.inner);
                    xn->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
    return Tensor::wrap(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    require_2d(x, "layer_norm");
    const int m = x.rows(), n = x.cols();
    if (n < 2) throw ContractError("layer_norm requires last-axis extent >= 2, got " + shape_str(x.shape()));
    if (gain.ndim() != 1 || gain.dim(0) != n || bias.ndim() != 1 || bias.dim(0) != n)
        throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(n) + "]");
    constexpr double kEps = 1e-6;
    auto out = make_node({m, n});
    std::vector<double> mu(static_cast<size_t>(m)), inv(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += x.at(i, j);
        double mean = s / n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        mu[static_cast<size_t>(i)] = mean;
        inv[static_cast<size_t>(i)] = 1.0 / std::sqrt(var + kEps);
        for (int j = 0; j < n; ++j) {
            double xh = (x.at(i, j) - mean) * inv[static_cast<size_t>(i)];
            out->value[static_cast<size_t>(i) * n + j] = gain[j] * xh + bias[j];
        }
    }
    auto xn = x.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr();
    record(out, {xn, gn, bn}, [xn, gn, bn, m, n, mu, inv](Node& self) {
        for (int i = 0; i < m; ++i) {
            const double* g = self.grad.data() + static_cast<size_t>(i) * n;
            const double* xv = xn->value.data() + static_cast<size_t>(i) * n;
            const double mean = mu[static_cast<size_t>(i)];
            const double is = inv[static_cast<size_t>(i)];
            if (gn->needs_grad || bn->needs_grad) {
                if (gn->needs_grad) gn->ensure_grad();
                if (bn->needs_grad) bn->ensure_grad();
                for (int j = 0; j < n; ++j) {
                    double xh = (xv[j] - mean) * is;
                    if (gn->needs_grad) gn->grad[j] += g[j] * xh;
                    if (bn->needs_grad) bn->grad[j] += g[j];
                }
            }
            if (xn->needs_grad) {
                xn->ensure_grad();
                // dxh = g * gain; project out mean and direction components
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int j = 0; j < n; ++j) {
                    double xh = (xv[j] - mean) * is;
                    double dxh = g[j] * gn->value[j];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                }
                for (int j = 0; j < n; ++j) {
                    double xh = (xv[j] - mean) * is;
                    double dxh = g[j] * gn->value[j];
                    xn->grad[static_cast<size_t>(i) * n + j] +=
                        is * (dxh - sum_dxh / n - xh * sum_dxh_xh / n);
                }
            }
        }
    });
    return Tensor::wrap(out);
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) {
        // identity pass-through, still differentiable
        return scale(x, 1.0);
    }
    const double keep = 1.0 - rate;
    auto out = make_node(x.shape());
    auto mask = std::make_shared<std::vector<double>>(x.values().size());
    for (size_t i = 0; i < x.values().size(); ++i) {
        double m = rng.uniform() >= rate ? 1.0 / keep : 0.0;
        (*mask)[i] = m;
        out->value[i] = x.values()[i] * m;
    }
    auto xn = x.node_ptr();
    record(out, {xn}, [xn, mask](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * (*mask)[i];
    });
    return Tensor::wrap(out);
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    require_2d(table, "embedding_rows");
    const int v = table.rows(), d = table.cols();
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ContractError("embedding id " + std::to_string(id) + " out of range [0, " + std::to_string(v) + ")");
    const int t = static_cast<int>(ids.size());
    if (t == 0) throw ContractError("embedding_rows: empty id list");
    auto out = make_node({t, d});
    for (int i = 0; i < t; ++i)
        std::copy_n(table.values().data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d, d,
                    out->value.data() + static_cast<size_t>(i) * d);
    auto tn = table.node_ptr();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    record(out, {tn}, [tn, ids_copy, d](Node& self) {
        tn->ensure_grad();
        for (size_t i = 0; i < ids_copy->size(); ++i) {
            double* dst = tn->grad.data() + static_cast<size_t>((*ids_copy)[i]) * d;
            const double* src = self.grad.data() + i * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    return Tensor::wrap(out);
}

Tensor gather_log_softmax(const Tensor& logits, const std::vector<int>& ids) {
    require_2d(logits, "gather_log_softmax");
    const int t = logits.rows(), v = logits.cols();
    if (static_cast<int>(ids.size()) != t)
        throw ShapeError("gather_log_softmax: " + std::to_string(ids.size()) + " ids for " + std::to_string(t) + " rows");
    for (int id : ids)
        if (id < 0 || id >= v) throw ContractError("gather_log_softmax: id " + std::to_string(id) + " out of range");
    auto out = make_node({t});
    auto lse = std::make_shared<std::vector<double>>(static_cast<size_t>(t));
    for (int i = 0; i < t; ++i) {
        const double* row = logits.values().data() + static_cast<size_t>(i) * v;
        double mx = row[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        (*lse)[static_cast<size_t>(i)] = mx + std::log(z);
        out->value[static_cast<size_t>(i)] = row[ids[static_cast<size_t>(i)]] - (*lse)[static_cast<size_t>(i)];
    }
    auto ln = logits.node_ptr();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    record(out, {ln}, [ln, ids_copy, lse, t, v](Node& self) {
        ln->ensure_grad();
        for (int i = 0; i < t; ++i) {
            const double* row = ln->value.data() + static_cast<size_t>(i) * v;
            double* grow = ln->grad.data() + static_cast<size_t>(i) * v;
            const double g = self.grad[static_cast<size_t>(i)];
            const double l = (*lse)[static_cast<size_t>(i)];
            for (int j = 0; j < v; ++j) {
                double p = std::exp(row[j] - l);
                grow[j] += g * ((j == (*ids_copy)[static_cast<size_t>(i)] ? 1.0 : 0.0) - p);
            }
        }
    });
    return Tensor::wrap(out);
}

Tensor log_softmax_rows(const Tensor& logits) {
    require_2d(logits, "log_softmax_rows");
    const int t = logits.rows(), v = logits.cols();
    auto out = make_node({t, v});
    for (int i = 0; i < t; ++i) {
        const double* row = logits.values().data() + static_cast<size_t>(i) * v;
        double mx = row[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        for (int j = 0; j < v; ++j) out->value[static_cast<size_t>(i) * v + j] = row[j] - lse;
    }
    auto ln = logits.node_ptr();
    record(out, {ln}, [ln, t, v](Node& self) {
        ln->ensure_grad();
        for (int i = 0; i < t; ++i) {
            const double* lp = self.value.data() + static_cast<size_t>(i) * v;
            const double* g = self.grad.data() + static_cast<size_t>(i) * v;
            double gsum = 0.0;
            for (int j = 0; j < v; ++j) gsum += g[j];
            double* dst = ln->grad.data() + static_cast<size_t>(i) * v;
            for (int j = 0; j < v; ++j) dst[j] += g[j] - std::exp(lp[j]) * gsum;
        }
    });
    return Tensor::wrap(out);
}

Tensor transpose2d(const Tensor& x) {
    require_2d(x, "transpose2d");
    const int m = x.rows(), n = x.cols();
    auto out = make_node({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->value[static_cast<size_t>(j) * m + i] = x.at(i, j);
    auto xn = x.node_ptr();
    record(out, {xn}, [xn, m, n](Node& self) {
        xn->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                xn->grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
    });
    return Tensor::wrap(out);
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
    require_2d(x, "slice_cols");
    const int m = x.rows(), n = x.cols();
    if (c0 < 0 || c1 > n || c0 >= c1)
        throw ShapeError("slice_cols [" + std::to_string(c0) + ", " + std::to_string(c1) + ") invalid for " + shape_str(x.shape()));
    const int w = c1 - c0;
    auto out = make_node({m, w});
    for (int i = 0; i < m; ++i)
        std::copy_n(x.values().data() + static_cast<size_t>(i) * n + c0, w, out->value.data() + static_cast<size_t>(i) * w);
    auto xn = x.node_ptr();
    record(out, {xn}, [xn, m, n, c0, w](Node& self) {
        xn->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                xn->grad[static_cast<size_t>(i) * n + c0 + j] += self.grad[static_cast<size_t>(i) * w + j];
    });
    return Tensor::wrap(out);
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
    require_2d(x, "slice_rows");
    const int m = x.rows(), n = x.cols();
    if (r0 < 0 || r1 > m || r0 >= r1)
        throw ShapeError("slice_rows [" + std::to_string(r0) + ", " + std::to_string(r1) + ") invalid for " + shape_str(x.shape()));
    const int h = r1 - r0;
    auto out = make_node({h, n});
    std::copy_n(x.values().data() + static_cast<size_t>(r0) * n, static_cast<size_t>(h) * n, out->value.data());
    auto xn = x.node_ptr();
    record(out, {xn}, [xn, n, r0, h](Node& self) {
        xn->ensure_grad();
        for (size_t i = 0; i < static_cast<size_t>(h) * n; ++i)
            xn->grad[static_cast<size_t>(r0) * n + i] += self.grad[i];
    });
    return Tensor::wrap(out);
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input list");
    const int m = xs[0].rows();
    int total = 0;
    for (const auto& x : xs) {
        require_2d(x, "concat_cols");
        if (x.rows() != m) throw ShapeError("concat_cols: row mismatch " + shape_str(x.shape()));
        total += x.cols();
    }
    auto out = make_node({m, total});
    int off = 0;
    for (const auto& x : xs) {
        const int w = x.cols();
        for (int i = 0; i < m; ++i)
            std::copy_n(x.values().data() + static_cast<size_t>(i) * w, w,
                        out->value.data() + static_cast<size_t>(i) * total + off);
        off += w;
    }
    std::vector<NodePtr> parents;
    for (const auto& x : xs) parents.push_back(x.node_ptr());
    auto shapes = std::make_shared<std::vector<int>>();
    for (const auto& x : xs) shapes->push_back(x.cols());
    record(out, parents, [parents, shapes, m, total](Node& self) {
        int off2 = 0;
        for (size_t p = 0; p < parents.size(); ++p) {
            const int w = (*shapes)[p];
            if (parents[p]->needs_grad) {
                parents[p]->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j)
                        parents[p]->grad[static_cast<size_t>(i) * w + j] +=
                            self.grad[static_cast<size_t>(i) * total + off2 + j];
            }
            off2 += w;
        }
    });
    return Tensor::wrap(out);
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_rows: empty input list");
    const int n = xs[0].cols();
    int total = 0;
    for (const auto& x : xs) {
        require_2d(x, "concat_rows");
        if (x.cols() != n) throw ShapeError("concat_rows: column mismatch " + shape_str(x.shape()));
        total += x.rows();
    }
    auto out = make_node({total, n});
    size_t off = 0;
    for (const auto& x : xs) {
        std::copy_n(x.values().data(), x.values().size(), out->value.data() + off);
        off += x.values().size();
    }
    std::vector<NodePtr> parents;
    std::vector<size_t> sizes;
    for (const auto& x : xs) {
        parents.push_back(x.node_ptr());
        sizes.push_back(x.values().size());
    }
    auto sz = std::make_shared<std::vector<size_t>>(std::move(sizes));
    record(out, parents, [parents, sz](Node& self) {
        size_t off2 = 0;
        for (size_t p = 0; p < parents.size(); ++p) {
            if (parents[p]->needs_grad) {
                parents[p]->ensure_grad();
                for (size_t i = 0; i < (*sz)[p]; ++i) parents[p]->grad[i] += self.grad[off2 + i];
            }
            off2 += (*sz)[p];
        }
    });
    return Tensor::wrap(out);
}

Tensor sum_all(const Tensor& x) {
    auto out = make_node({1});
    double s = 0.0;
    for (double v : x.values()) s += v;
    out->value[0] = s;
    auto xn = x.node_ptr();
    record(out, {xn}, [xn](Node& self) {
        xn->ensure_grad();
        for (auto& g : xn->grad) g += self.grad[0];
    });
    return Tensor::wrap(out);
}

Tensor mean_rows(const Tensor& x) {
    require_2d(x, "mean_rows");
    const int m = x.rows(), n = x.cols();
    auto out = make_node({1, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->value[static_cast<size_t>(j)] += x.at(i, j);
    for (int j = 0; j < n; ++j) out->value[static_cast<size_t>(j)] /= m;
    auto xn = x.node_ptr();
    record(out, {xn}, [xn, m, n](Node& self) {
        xn->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) xn->grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j)] / m;
    });
    return Tensor::wrap(out);
}

// ---- backward ----

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("undefined tensor")));
    Node* root = loss.node();
    if (!root->needs_grad) return; // nothing reachable requires gradients

    // iterative post-order DFS over nodes that need gradients
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        bool descended = false;
        while (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->needs_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    // fresh buffers for interior nodes so repeated backward calls only
    // accumulate into leaves
    for (Node* n : order) {
        if (!n->is_leaf())
            n->grad.assign(n->value.size(), 0.0);
        else
            n->ensure_grad();
    }
    if (root->is_leaf())
        root->grad[0] += 1.0;
    else
        root->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---- optimizer ----

void adam_update(std::vector<Parameter>& params, AdamState& state) {
    if (!state.initialized()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].tensor.values().size(), 0.0);
            state.v[i].assign(params[i].tensor.values().size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw ContractError("adam_update: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                            std::to_string(params.size()));
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        if (!p.tensor.requires_grad()) continue;
        if (!p.tensor.has_grad())
            throw ContractError("adam_update: no gradient for parameter '" + p.name + "'");
        auto& val = p.tensor.values();
        const auto& g = p.tensor.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < val.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

void zero_grads(std::vector<Parameter>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

double clip_global_norm(std::vector<Parameter>& params, double max_norm) {
    double sq = 0.0;
    for (auto& p : params) {
        if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& p : params) {
            if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
            for (double& g : p.tensor.grad()) g *= f;
        }
    }
    return norm;
}

} // namespace nmtlab
