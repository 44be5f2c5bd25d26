#ifndef KTNET_MODEL_HPP
#define KTNET_MODEL_HPP

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ktnet/checkpoint.hpp"
#include "ktnet/optimizer.hpp"
#include "ktnet/pointcloud.hpp"
#include "ktnet/tensor.hpp"

namespace ktnet {

struct ModelConfig {
    int64_t k = 256;        // global feature width
    int64_t n_stages = 3;   // knowledge transfer layers; 0 = global feature only
    int64_t n_out = 256;    // generated points per cloud
    int64_t enc_h1 = 128;
    int64_t enc_h2 = 256;
    int64_t dec_hidden = 512;
    int64_t disc_h1 = 256;
    int64_t disc_h2 = 64;
    bool with_kra = true;   // build KRA units (off under the no_kra ablation)
    bool with_kda = true;   // build discriminators (off under no_kda)
    bool residual = true;   // enhanced = feature + KRA(feature)

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Teacher and student paths over one parameter store: a shared point-MLP
// encoder, n FC+ReLU transfer stages, per-stage residual recovery units and
// score heads, and a shared restoration decoder. The student path reads the
// transfer and decoder weights through detach so its losses can never update
// them.
class KTNetModel {
public:
    KTNetModel(const ModelConfig& cfg, Rng& rng);

    const ModelConfig& config() const { return cfg_; }

    ParamGroup& theta_fe() { return fe_; }
    ParamGroup& theta_kt() { return kt_; }
    ParamGroup& theta_kra() { return kra_; }
    ParamGroup& theta_mlp() { return mlp_; }
    ParamGroup& theta_d() { return d_; }
    std::vector<ParamGroup*> groups() { return {&fe_, &kt_, &kra_, &mlp_, &d_}; }
    ParamGroup& group(const std::string& name);

    // Per-point MLP 3 -> enc_h1 -> enc_h2 -> k with ReLU between layers,
    // column max over points, stacked to [B,k]. Accepts variable N per cloud.
    Tensor encode(const std::vector<const PointCloud*>& clouds);

    // f_y^i = ReLU(FC_i(f_y^{i-1})), i = 1..n. n = 0 degenerates to {f}.
    std::vector<Tensor> kt_teacher(const Tensor& f0);

    struct StudentOpts {
        bool use_kra = true;
        bool use_residual = true;
        bool detach_kt = true;  // gradient shielding; off in grad_all ablations
    };
    StudentOpts default_student_opts() const {
        return {cfg_.with_kra, cfg_.residual, true};
    }

    // Student stages with the transfer weights applied through detach and
    // the recovery unit enhancing each stage output.
    std::vector<Tensor> kt_student(const Tensor& f0, const StudentOpts& opts);

    // Score head i: d -> disc_h1 -> disc_h2 -> 1, ReLU hidden, linear out.
    Tensor kda_score(int stage_index, const Tensor& f, bool detach_params = false);

    int discriminator_count() const;

    // k -> dec_hidden -> 3*n_out. Student path passes detach_decoder=true.
    Tensor restore(const Tensor& f, bool detach_decoder);

    struct ForwardResult {
        Tensor f0;                         // [B,k]
        std::vector<Tensor> stage_features;  // teacher: f_y^i; student: enhanced h_i'
        Tensor pred;                       // [B, 3*n_out]
    };
    ForwardResult teacher_forward(const std::vector<const PointCloud*>& clouds);
    ForwardResult student_forward(const std::vector<const PointCloud*>& clouds);
    ForwardResult student_forward(const std::vector<const PointCloud*>& clouds,
                                  const StudentOpts& opts);

    // Complete inference path: partial cloud in, predicted cloud out. Runs
    // without gradient tracking.
    PointCloud predict(const PointCloud& partial);

    nlohmann::json hyperparameter_header() const { return cfg_.to_json(); }

private:
    Tensor param(ParamGroup& g, const std::string& name);
    Tensor fc_layer(ParamGroup& g, const std::string& prefix, const Tensor& x, bool detached);

    ModelConfig cfg_;
    ParamGroup fe_{"theta_FE", {}};
    ParamGroup kt_{"theta_KT", {}};
    ParamGroup kra_{"theta_KRA", {}};
    ParamGroup mlp_{"theta_MLP", {}};
    ParamGroup d_{"theta_D", {}};
};

// Checkpoint glue for the parameter store (records named "param.<name>").
void model_to_records(KTNetModel& model, std::map<std::string, CheckpointRecord>& out);
void model_from_records(KTNetModel& model,
                        const std::map<std::string, CheckpointRecord>& records);

}  // namespace ktnet

#endif
