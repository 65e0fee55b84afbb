#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// The graph is dynamic: every forward op allocates a fresh node that knows
// its parents and how to push gradients back to them. backward(loss) walks
// the recorded graph once; leaf gradients accumulate across calls until
// zero_grad(). Single-threaded by contract during training.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nmtlab/errors.hpp"
#include "nmtlab/rng.hpp"

namespace nmtlab {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
long long shape_numel(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // empty until backward touches this node
    bool requires_grad = false; // leaf-level flag (parameters)
    bool needs_grad = false;    // this node or an ancestor requires grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop; // empty for leaves/constants

    long long size() const { return static_cast<long long>(value.size()); }
    bool is_leaf() const { return !backprop; }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

} // namespace detail

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar_value(double v);
    static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    int ndim() const { return static_cast<int>(n_->shape.size()); }
    long long size() const { return n_->size(); }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }

    // 2-d convenience
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    // flat access
    double& operator[](long long i) { return n_->value[static_cast<size_t>(i)]; }
    double operator[](long long i) const { return n_->value[static_cast<size_t>(i)]; }

    std::vector<double>& values() { return n_->value; }
    const std::vector<double>& values() const { return n_->value; }

    bool has_grad() const { return !n_->grad.empty(); }
    std::vector<double>& grad() { return n_->grad; }
    const std::vector<double>& grad() const { return n_->grad; }
    void zero_grad() { n_->grad.clear(); } // next backward starts fresh

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) {
        n_->requires_grad = rg;
        if (n_->parents.empty()) n_->needs_grad = rg;
        else if (rg) n_->needs_grad = true;
    }

    detail::Node* node() const { return n_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return n_; }

    // value copy detached from any graph
    Tensor clone_detached(bool requires_grad = false) const;

    static Tensor wrap(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

  private:
    std::shared_ptr<detail::Node> n_;
};

// ---- forward ops (all differentiable unless noted) ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b); // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b); // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias); // [m x n] + [n]
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);
// per-row log softmax picked at ids: out[t] = log softmax(logits[t])[ids[t]]
Tensor gather_log_softmax(const Tensor& logits, const std::vector<int>& ids);
Tensor log_softmax_rows(const Tensor& logits);
Tensor transpose2d(const Tensor& x);
Tensor slice_cols(const Tensor& x, int c0, int c1); // [c0, c1)
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor sum_all(const Tensor& x);       // -> shape {1}
Tensor mean_rows(const Tensor& x);     // [m x n] -> [1 x n]

// Populates grad fields of every requires_grad tensor reachable from loss.
// Repeated calls without zero_grad accumulate into leaf gradients.
void backward(const Tensor& loss);

// ---- optimizer ----

struct Parameter {
    std::string name;
    Tensor tensor;
};

struct AdamState {
    long long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double lr = 1e-4;
    std::vector<std::vector<double>> m, v; // parallel to the parameter list

    bool initialized() const { return !m.empty(); }
};

// Standard Adam with bias correction. Parameters with requires_grad=false
// are skipped; a requires_grad parameter without a populated gradient is a
// contract error naming the parameter.
void adam_update(std::vector<Parameter>& params, AdamState& state);

void zero_grads(std::vector<Parameter>& params);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm. max_norm <= 0 disables clipping.
double clip_global_norm(std::vector<Parameter>& params, double max_norm);

} // namespace nmtlab
