#ifndef KTNET_TENSOR_HPP
#define KTNET_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ktnet/common.hpp"

namespace ktnet {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the dynamically built reverse-mode graph. Leaves have no
// backprop recipe; interior nodes keep their inputs alive through `parents`.
struct TensorNode {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // leaf accumulator, allocated on first use
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    // Receives d(loss)/d(self) and adds d(loss)/d(parent_i) into *padj[i].
    // padj[i] is null when parent i does not need a gradient.
    std::function<void(const TensorNode& self, const std::vector<double>& adj,
                       const std::vector<std::vector<double>*>& padj)>
        backprop;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
    bool is_leaf() const { return !backprop; }
};

// Value-semantic handle to a graph node.
class Tensor {
public:
    Tensor() = default;

    static Tensor leaf(std::vector<int64_t> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return n_ != nullptr; }
    const std::vector<int64_t>& shape() const { return n_->shape; }
    int64_t numel() const { return n_->numel(); }
    int64_t dim(size_t i) const { return n_->shape.at(i); }
    size_t rank() const { return n_->shape.size(); }

    const std::vector<double>& values() const { return n_->data; }
    std::vector<double>& values() { return n_->data; }

    bool requires_grad() const { return n_->requires_grad; }
    bool grad_allocated() const { return !n_->grad.empty(); }
    // Gradient accumulator; allocated as zeros on first access.
    std::vector<double>& grad();
    void zero_grad();

    // Scalar extraction; requires numel() == 1.
    double item() const;

    // Stop-gradient: same values, requires_grad=false, no recipe.
    Tensor detach() const;

    TensorNode* node() const { return n_.get(); }
    const NodePtr& handle() const { return n_; }

    explicit Tensor(NodePtr n) : n_(std::move(n)) {}

private:
    NodePtr n_;
};

// While alive, ops record no graph; forward values are unchanged.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// y = xW + b with x:[B,in], W:[in,out], b:[out]; b broadcast over rows.
Tensor fc(const Tensor& x, const Tensor& w, const Tensor& b);

// Elementwise max(0, x); subgradient at 0 is 0.
Tensor relu(const Tensor& x);

// Columnwise max of [N,d] -> [d]. Gradient goes to the argmax row per
// column, lowest row index on ties.
Tensor maxpool_points(const Tensor& f);

// Stacks B tensors of shape [d] into [B,d].
Tensor stack_rows(const std::vector<Tensor>& rows);

// Row i of [B,C] -> [C].
Tensor row(const Tensor& x, int64_t i);

// Same data, new shape with identical element count.
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);

Tensor add(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor scale(const Tensor& x, double a);
Tensor add_scalar(const Tensor& x, double c);
Tensor square(const Tensor& x);
Tensor mean_all(const Tensor& x);  // -> [1]
Tensor sum_all(const Tensor& x);   // -> [1]

// Accumulates d(loss)/d(leaf) into every reachable requires_grad leaf.
// Interior adjoints are scratch per call, so repeated calls add up.
void backward(const Tensor& loss);

}  // namespace ktnet

#endif
