#include "ktnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace ktnet {

namespace {

thread_local bool g_grad_enabled = true;

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        require(d > 0, "tensor dimensions must be positive, got shape ", shape_str(shape));
        n *= d;
    }
    return n;
}

using BackpropFn = std::function<void(const TensorNode&, const std::vector<double>&,
                                      const std::vector<std::vector<double>*>&)>;

// Shared op constructor. Records the graph edge only when gradients are
// enabled and at least one input needs them.
Tensor make_op(std::vector<int64_t> shape, std::vector<double> data,
               std::vector<Tensor> inputs, BackpropFn bp) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.handle());
        node->backprop = std::move(bp);
    }
    return Tensor(std::move(node));
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::leaf(std::vector<int64_t> shape, std::vector<double> data, bool requires_grad) {
    int64_t n = shape_numel(shape);
    require(static_cast<int64_t>(data.size()) == n, "data length ", data.size(),
            " does not match shape ", shape_str(shape));
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    int64_t n = shape_numel(shape);
    return leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad);
}

Tensor Tensor::scalar(double v) { return leaf({1}, {v}); }

std::vector<double>& Tensor::grad() {
    if (n_->grad.empty()) n_->grad.assign(n_->data.size(), 0.0);
    return n_->grad;
}

void Tensor::zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

double Tensor::item() const {
    require(numel() == 1, "item() needs a scalar tensor, got shape ", shape_str(n_->shape));
    return n_->data[0];
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<TensorNode>();
    node->shape = n_->shape;
    node->data = n_->data;
    node->requires_grad = false;
    return Tensor(std::move(node));
}

Tensor fc(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 2, "fc input must be 2-D, got ", shape_str(x.shape()));
    require(w.rank() == 2, "fc weight must be 2-D, got ", shape_str(w.shape()));
    require(b.rank() == 1, "fc bias must be 1-D, got ", shape_str(b.shape()));
    const int64_t rows = x.dim(0), in = x.dim(1), out = w.dim(1);
    require(w.dim(0) == in, "fc dimension mismatch: input ", shape_str(x.shape()),
            " vs weight ", shape_str(w.shape()));
    require(b.dim(0) == out, "fc dimension mismatch: weight ", shape_str(w.shape()),
            " vs bias ", shape_str(b.shape()));

    const auto& xv = x.values();
    const auto& wv = w.values();
    const auto& bv = b.values();
    std::vector<double> y(static_cast<size_t>(rows * out));
    for (int64_t i = 0; i < rows; ++i) {
        double* yr = y.data() + i * out;
        for (int64_t j = 0; j < out; ++j) yr[j] = bv[j];
        const double* xr = xv.data() + i * in;
        for (int64_t k = 0; k < in; ++k) {
            const double xik = xr[k];
            const double* wr = wv.data() + k * out;
            for (int64_t j = 0; j < out; ++j) yr[j] += xik * wr[j];
        }
    }

    return make_op({rows, out}, std::move(y), {x, w, b},
                   [rows, in, out](const TensorNode& self, const std::vector<double>& adj,
                                   const std::vector<std::vector<double>*>& padj) {
                       const auto& xv = self.parents[0]->data;
                       const auto& wv = self.parents[1]->data;
                       if (padj[0]) {  // dX = dY * W^T
                           auto& dx = *padj[0];
                           for (int64_t i = 0; i < rows; ++i) {
                               const double* ar = adj.data() + i * out;
                               double* dr = dx.data() + i * in;
                               for (int64_t k = 0; k < in; ++k) {
                                   const double* wr = wv.data() + k * out;
                                   double acc = 0.0;
                                   for (int64_t j = 0; j < out; ++j) acc += ar[j] * wr[j];
                                   dr[k] += acc;
                               }
                           }
                       }
                       if (padj[1]) {  // dW = X^T * dY
                           auto& dw = *padj[1];
                           for (int64_t i = 0; i < rows; ++i) {
                               const double* xr = xv.data() + i * in;
                               const double* ar = adj.data() + i * out;
                               for (int64_t k = 0; k < in; ++k) {
                                   const double xik = xr[k];
                                   double* dwr = dw.data() + k * out;
                                   for (int64_t j = 0; j < out; ++j) dwr[j] += xik * ar[j];
                               }
                           }
                       }
                       if (padj[2]) {  // db = column sums of dY
                           auto& db = *padj[2];
                           for (int64_t i = 0; i < rows; ++i) {
                               const double* ar = adj.data() + i * out;
                               for (int64_t j = 0; j < out; ++j) db[j] += ar[j];
                           }
                       }
                   });
}

Tensor relu(const Tensor& x) {
    std::vector<double> y(x.values().size());
    const auto& xv = x.values();
    for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return make_op(x.shape(), std::move(y), {x},
                   [](const TensorNode& self, const std::vector<double>& adj,
                      const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       const auto& xv = self.parents[0]->data;
                       auto& dx = *padj[0];
                       for (size_t i = 0; i < xv.size(); ++i)
                           if (xv[i] > 0.0) dx[i] += adj[i];
                   });
}

Tensor maxpool_points(const Tensor& f) {
    require(f.rank() == 2, "maxpool_points input must be [N,d], got ", shape_str(f.shape()));
    const int64_t n = f.dim(0), d = f.dim(1);
    require(n >= 1, "maxpool_points needs at least one point");
    const auto& fv = f.values();
    std::vector<double> out(static_cast<size_t>(d));
    std::vector<int64_t> arg(static_cast<size_t>(d), 0);
    for (int64_t j = 0; j < d; ++j) out[j] = fv[j];
    for (int64_t i = 1; i < n; ++i) {
        const double* r = fv.data() + i * d;
        for (int64_t j = 0; j < d; ++j) {
            if (r[j] > out[j]) {  // strict: ties keep the lowest row
                out[j] = r[j];
                arg[j] = i;
            }
        }
    }
    return make_op({d}, std::move(out), {f},
                   [d, arg = std::move(arg)](const TensorNode&, const std::vector<double>& adj,
                                             const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       auto& df = *padj[0];
                       for (int64_t j = 0; j < d; ++j) df[arg[j] * d + j] += adj[j];
                   });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    require(!rows.empty(), "stack_rows needs at least one row");
    const int64_t d = rows[0].numel();
    for (const auto& r : rows)
        require(r.rank() == 1 && r.dim(0) == d, "stack_rows rows must all be shape [", d,
                "], got ", shape_str(r.shape()));
    const int64_t b = static_cast<int64_t>(rows.size());
    std::vector<double> out;
    out.reserve(static_cast<size_t>(b * d));
    for (const auto& r : rows) out.insert(out.end(), r.values().begin(), r.values().end());
    return make_op({b, d}, std::move(out), rows,
                   [d](const TensorNode&, const std::vector<double>& adj,
                       const std::vector<std::vector<double>*>& padj) {
                       for (size_t i = 0; i < padj.size(); ++i) {
                           if (!padj[i]) continue;
                           auto& dr = *padj[i];
                           const double* a = adj.data() + i * d;
                           for (int64_t j = 0; j < d; ++j) dr[j] += a[j];
                       }
                   });
}

Tensor row(const Tensor& x, int64_t i) {
    require(x.rank() == 2, "row() input must be 2-D, got ", shape_str(x.shape()));
    require(i >= 0 && i < x.dim(0), "row index ", i, " out of range for ", shape_str(x.shape()));
    const int64_t c = x.dim(1);
    std::vector<double> out(x.values().begin() + i * c, x.values().begin() + (i + 1) * c);
    return make_op({c}, std::move(out), {x},
                   [i, c](const TensorNode&, const std::vector<double>& adj,
                          const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       auto& dx = *padj[0];
                       for (int64_t j = 0; j < c; ++j) dx[i * c + j] += adj[j];
                   });
}

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
    require(shape_numel(shape) == x.numel(), "reshape to ", shape_str(shape),
            " changes element count of ", shape_str(x.shape()));
    return make_op(std::move(shape), x.values(), {x},
                   [](const TensorNode&, const std::vector<double>& adj,
                      const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       auto& dx = *padj[0];
                       for (size_t i = 0; i < adj.size(); ++i) dx[i] += adj[i];
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add shape mismatch: ", shape_str(a.shape()), " vs ",
            shape_str(b.shape()));
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_op(a.shape(), std::move(out), {a, b},
                   [](const TensorNode&, const std::vector<double>& adj,
                      const std::vector<std::vector<double>*>& padj) {
                       for (auto* p : padj) {
                           if (!p) continue;
                           for (size_t i = 0; i < adj.size(); ++i) (*p)[i] += adj[i];
                       }
                   });
}

Tensor scale(const Tensor& x, double a) {
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x.values()[i];
    return make_op(x.shape(), std::move(out), {x},
                   [a](const TensorNode&, const std::vector<double>& adj,
                       const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       for (size_t i = 0; i < adj.size(); ++i) (*padj[0])[i] += a * adj[i];
                   });
}

Tensor add_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + c;
    return make_op(x.shape(), std::move(out), {x},
                   [](const TensorNode&, const std::vector<double>& adj,
                      const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       for (size_t i = 0; i < adj.size(); ++i) (*padj[0])[i] += adj[i];
                   });
}

Tensor square(const Tensor& x) {
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * x.values()[i];
    return make_op(x.shape(), std::move(out), {x},
                   [](const TensorNode& self, const std::vector<double>& adj,
                      const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       const auto& xv = self.parents[0]->data;
                       for (size_t i = 0; i < adj.size(); ++i)
                           (*padj[0])[i] += 2.0 * xv[i] * adj[i];
                   });
}

Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return make_op({1}, {acc * inv}, {x},
                   [inv](const TensorNode&, const std::vector<double>& adj,
                         const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       const double g = adj[0] * inv;
                       for (auto& d : *padj[0]) d += g;
                   });
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return make_op({1}, {acc}, {x},
                   [](const TensorNode&, const std::vector<double>& adj,
                      const std::vector<std::vector<double>*>& padj) {
                       if (!padj[0]) return;
                       for (auto& d : *padj[0]) d += adj[0];
                   });
}

void backward(const Tensor& loss) {
    require(loss.defined() && loss.numel() == 1, "backward needs a scalar loss, got shape ",
            loss.defined() ? shape_str(loss.shape()) : std::string("<empty>"));
    if (!loss.requires_grad()) return;  // nothing reachable needs gradients

    // Topological order over the requires_grad subgraph, iterative DFS.
    std::vector<TensorNode*> order;
    std::unordered_map<TensorNode*, int> state;  // 0 new, 1 open, 2 done
    std::vector<TensorNode*> stack{loss.node()};
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        int& st = state[n];
        if (st == 0) {
            st = 1;
            for (const auto& p : n->parents)
                if (p->requires_grad && state[p.get()] == 0) stack.push_back(p.get());
        } else {
            stack.pop_back();
            if (st == 1) {
                st = 2;
                order.push_back(n);
            }
        }
    }

    // Adjoints are per-call scratch; only leaves accumulate into .grad, so
    // repeated backward calls add exactly one contribution each.
    std::unordered_map<TensorNode*, std::vector<double>> adjoint;
    adjoint[loss.node()] = {1.0};

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        auto found = adjoint.find(n);
        if (found == adjoint.end()) continue;  // unreachable from the loss
        const std::vector<double>& adj = found->second;
        if (n->is_leaf()) {
            if (n->requires_grad) {
                if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
                for (size_t i = 0; i < adj.size(); ++i) n->grad[i] += adj[i];
            }
            continue;
        }
        std::vector<std::vector<double>*> padj(n->parents.size(), nullptr);
        for (size_t i = 0; i < n->parents.size(); ++i) {
            TensorNode* p = n->parents[i].get();
            if (!p->requires_grad) continue;
            auto& slot = adjoint[p];
            if (slot.empty()) slot.assign(p->data.size(), 0.0);
            padj[i] = &slot;
        }
        n->backprop(*n, adj, padj);
    }
}

}  // namespace ktnet
