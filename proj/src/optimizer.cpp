#include "ktnet/optimizer.hpp"

#include <cmath>

namespace ktnet {

std::vector<double>& AdamOptimizer::moment_m(const std::string& param_name, size_t size) {
    auto& mo = moments_[param_name];
    if (mo.m.size() != size) mo.m.assign(size, 0.0);
    return mo.m;
}

std::vector<double>& AdamOptimizer::moment_v(const std::string& param_name, size_t size) {
    auto& mo = moments_[param_name];
    if (mo.v.size() != size) mo.v.assign(size, 0.0);
    return mo.v;
}

void AdamOptimizer::step(ParamGroup& group, double lr) {
    require(lr > 0.0, "optimizer step needs lr > 0, got ", lr);
    const int64_t t = ++steps_[group.name];
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    for (auto& p : group.params) {
        auto& values = p.tensor.values();
        auto& grad = p.tensor.grad();  // unallocated grads read as zeros
        auto& mo = moments_[p.name];
        if (mo.m.size() != values.size()) mo.m.assign(values.size(), 0.0);
        if (mo.v.size() != values.size()) mo.v.assign(values.size(), 0.0);
        for (size_t i = 0; i < values.size(); ++i) {
            const double g = grad[i];
            mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
            mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
            const double mhat = mo.m[i] / bc1;
            const double vhat = mo.v[i] / bc2;
            values[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
        p.tensor.zero_grad();
    }
}

}  // namespace ktnet
