#ifndef KTNET_TRAINER_HPP
#define KTNET_TRAINER_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ktnet/checkpoint.hpp"
#include "ktnet/metrics.hpp"
#include "ktnet/model.hpp"
#include "ktnet/optimizer.hpp"
#include "ktnet/pointcloud.hpp"

namespace ktnet {

struct AblationFlags {
    bool no_kra = false;
    bool no_kda = false;
    bool no_residual = false;
    bool no_lstudent = false;
    bool only_global = false;
    bool grad_all_student = false;  // d(L_student)/d(theta_all) variant
    bool grad_all_g = false;        // d(L_G)/d(theta_all) variant

    std::vector<std::string> names() const;
    static AblationFlags from_names(const std::vector<std::string>& names);
};

struct TrainConfig {
    double gamma = 1e-4;    // generator learning rate; discriminators get 2*gamma
    double lambda_g = 0.1;
    double lambda_p = 1.0;
    int batch_size = 16;
    int epochs = 200;
    uint64_t seed = 0;
    EmdMode emd_mode = EmdMode::exact;
    double emd_epsilon = 1e-3;
    int checkpoint_every = 100;  // epochs; 0 disables periodic checkpoints
    AblationFlags ablation;
    ModelConfig model;

    // Applies ablation flags to the structural model switches.
    void apply_ablation();
    void validate() const;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);

    // Paper-scale settings: batch 32, 600 epochs, 2048 points, k=1024,
    // approximate EMD.
    static TrainConfig paper_preset();
};

struct TrainState {
    int64_t step = 0;
    int64_t epoch = 0;
    Rng rng{0};
};

struct StepLosses {
    double l_d = 0.0;
    double l_g = 0.0;
    double l_teacher = 0.0;
    double l_student = 0.0;
};

class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);
    static Trainer from_checkpoint(const std::filesystem::path& path);

    TrainConfig& config() { return cfg_; }
    KTNetModel& model() { return model_; }
    AdamOptimizer& optimizer() { return opt_; }
    TrainState& state() { return state_; }

    // ---- loss assembly (Eqs. of the training objective) ----
    // Discrimination loss over per-stage feature lists; features are
    // detached here so only the score heads receive gradients.
    Tensor loss_d(const std::vector<Tensor>& f_student, const std::vector<Tensor>& f_teacher);
    // Generator-side matching loss; score-head parameters applied through
    // detach.
    Tensor loss_g(const std::vector<Tensor>& f_student);
    // Mean EMD between each resampled complete input and its reconstruction.
    Tensor loss_teacher(const std::vector<PointCloud>& complete, const Tensor& pred);
    // Mean UCD from each partial input into its prediction.
    Tensor loss_student(const std::vector<const PointCloud*>& partial, const Tensor& pred);

    // ---- fresh-forward loss evaluators (pure in the parameters) ----
    Tensor eval_loss_d(const std::vector<const PointCloud*>& partial,
                       const std::vector<PointCloud>& complete);
    Tensor eval_loss_teacher(const std::vector<PointCloud>& complete);
    struct StudentLosses {
        Tensor l_g;  // undefined when the matching loss is ablated away
        Tensor l_s;  // undefined under no_lstudent
        double combined_value = 0.0;
    };
    StudentLosses eval_student_losses(const std::vector<const PointCloud*>& partial);

    // One three-phase update; batches are drawn without correspondence.
    StepLosses train_step(const std::vector<const PointCloud*>& partial_batch,
                          const std::vector<const PointCloud*>& complete_batch);

    struct FitResult {
        std::filesystem::path checkpoint_path;
        std::filesystem::path loss_log_path;
        std::filesystem::path report_path;
        std::vector<std::filesystem::path> periodic_checkpoints;
        double mean_cd_scaled = 0.0;  // paired_test Chamfer x 1e4
    };
    FitResult fit(const DatasetSplit& data, const std::filesystem::path& out_dir);

    void save(const std::filesystem::path& path);

    // Complete clouds resampled (or cyclically padded) to exactly n points.
    static PointCloud resample_to(const PointCloud& cloud, int64_t n, Rng& rng);

private:
    Tensor phase2_forward_loss(const std::vector<PointCloud>& complete);

    TrainConfig cfg_;
    Rng init_rng_;
    KTNetModel model_;
    AdamOptimizer opt_;
    TrainState state_;
};

// Chamfer (x 1e4) on held-out pairs, per category plus the Average row.
MetricReport evaluate_paired(KTNetModel& model,
                             const std::vector<std::pair<PointCloud, PointCloud>>& pairs);

// CSV rows (id, path, stage, feature...) for complete clouds through the
// teacher stages and partial clouds through the raw and enhanced student
// stages.
void write_feature_csv(KTNetModel& model, const std::vector<const PointCloud*>& clouds,
                       const std::vector<std::string>& ids, std::ostream& os);

}  // namespace ktnet

#endif
