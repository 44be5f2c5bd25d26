#ifndef KTNET_OPTIMIZER_HPP
#define KTNET_OPTIMIZER_HPP

#include <map>
#include <string>
#include <vector>

#include "ktnet/tensor.hpp"

namespace ktnet {

struct Param {
    std::string name;
    Tensor tensor;
};

// Ordered list of named trainable leaves. Groups partition the model:
// theta_FE, theta_KT, theta_KRA, theta_MLP, theta_D.
struct ParamGroup {
    std::string name;
    std::vector<Param> params;

    void zero_grads() {
        for (auto& p : params) p.tensor.zero_grad();
    }
    Param* find(const std::string& param_name) {
        for (auto& p : params)
            if (p.name == param_name) return &p;
        return nullptr;
    }
};

// Adam with per-parameter moment buffers, keyed by parameter name so state
// survives checkpoint round-trips. step() zeroes the group's grads after the
// update.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamGroup& group, double lr);

    int64_t step_count(const std::string& group_name) const {
        auto it = steps_.find(group_name);
        return it == steps_.end() ? 0 : it->second;
    }
    void set_step_count(const std::string& group_name, int64_t t) { steps_[group_name] = t; }

    // Moment buffers for serialization; created on demand, zero-filled.
    std::vector<double>& moment_m(const std::string& param_name, size_t size);
    std::vector<double>& moment_v(const std::string& param_name, size_t size);
    bool has_state(const std::string& param_name) const {
        return moments_.count(param_name) > 0;
    }

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    double beta1_, beta2_, eps_;
    std::map<std::string, Moments> moments_;
    std::map<std::string, int64_t> steps_;
};

}  // namespace ktnet

#endif
