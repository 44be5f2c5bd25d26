#include "ktnet/model.hpp"

#include <cmath>

namespace ktnet {

using nlohmann::json;

json ModelConfig::to_json() const {
    return json{{"k", k},
                {"n_stages", n_stages},
                {"n_out", n_out},
                {"enc_h1", enc_h1},
                {"enc_h2", enc_h2},
                {"dec_hidden", dec_hidden},
                {"disc_h1", disc_h1},
                {"disc_h2", disc_h2},
                {"with_kra", with_kra},
                {"with_kda", with_kda},
                {"residual", residual}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    c.k = j.at("k").get<int64_t>();
    c.n_stages = j.at("n_stages").get<int64_t>();
    c.n_out = j.at("n_out").get<int64_t>();
    c.enc_h1 = j.at("enc_h1").get<int64_t>();
    c.enc_h2 = j.at("enc_h2").get<int64_t>();
    c.dec_hidden = j.at("dec_hidden").get<int64_t>();
    c.disc_h1 = j.at("disc_h1").get<int64_t>();
    c.disc_h2 = j.at("disc_h2").get<int64_t>();
    c.with_kra = j.at("with_kra").get<bool>();
    c.with_kda = j.at("with_kda").get<bool>();
    c.residual = j.at("residual").get<bool>();
    return c;
}

namespace {

// Fan-based uniform init; the final FC of each recovery unit is instead
// zero-initialized so enhancement starts as the identity.
Tensor glorot(int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> w(static_cast<size_t>(fan_in * fan_out));
    for (auto& v : w) v = rng.uniform(-bound, bound);
    return Tensor::leaf({fan_in, fan_out}, std::move(w), true);
}

void add_linear(ParamGroup& g, const std::string& prefix, int64_t in, int64_t out, Rng& rng,
                bool zero_init = false) {
    Tensor w = zero_init ? Tensor::zeros({in, out}, true) : glorot(in, out, rng);
    g.params.push_back({prefix + ".W", std::move(w)});
    g.params.push_back({prefix + ".b", Tensor::zeros({out}, true)});
}

}  // namespace

KTNetModel::KTNetModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    require(cfg.k >= 1 && cfg.n_out >= 1 && cfg.n_stages >= 0,
            "model config needs k >= 1, n_out >= 1, n_stages >= 0");
    add_linear(fe_, "fe.l0", 3, cfg.enc_h1, rng);
    add_linear(fe_, "fe.l1", cfg.enc_h1, cfg.enc_h2, rng);
    add_linear(fe_, "fe.l2", cfg.enc_h2, cfg.k, rng);
    for (int64_t i = 1; i <= cfg.n_stages; ++i)
        add_linear(kt_, "kt.s" + std::to_string(i), cfg.k, cfg.k, rng);
    if (cfg.with_kra) {
        for (int64_t i = 1; i <= cfg.n_stages; ++i) {
            const std::string p = "kra.s" + std::to_string(i);
            add_linear(kra_, p + ".f0", cfg.k, cfg.k, rng);
            add_linear(kra_, p + ".f1", cfg.k, cfg.k, rng, /*zero_init=*/true);
        }
    }
    add_linear(mlp_, "dec.l0", cfg.k, cfg.dec_hidden, rng);
    add_linear(mlp_, "dec.l1", cfg.dec_hidden, 3 * cfg.n_out, rng);
    if (cfg.with_kda) {
        for (int i = 0; i < discriminator_count(); ++i) {
            const std::string p = "d.s" + std::to_string(i + 1);
            add_linear(d_, p + ".l0", cfg.k, cfg.disc_h1, rng);
            add_linear(d_, p + ".l1", cfg.disc_h1, cfg.disc_h2, rng);
            add_linear(d_, p + ".l2", cfg.disc_h2, 1, rng);
        }
    }
}

int KTNetModel::discriminator_count() const {
    if (!cfg_.with_kda) return 0;
    // n = 0 keeps a single head on the global feature itself.
    return cfg_.n_stages >= 1 ? static_cast<int>(cfg_.n_stages) : 1;
}

ParamGroup& KTNetModel::group(const std::string& name) {
    for (ParamGroup* g : groups())
        if (g->name == name) return *g;
    throw std::invalid_argument(msg_cat("unknown parameter group '", name, "'"));
}

Tensor KTNetModel::param(ParamGroup& g, const std::string& name) {
    Param* p = g.find(name);
    require(p != nullptr, "parameter '", name, "' not found in group ", g.name);
    return p->tensor;
}

Tensor KTNetModel::fc_layer(ParamGroup& g, const std::string& prefix, const Tensor& x,
                            bool detached) {
    Tensor w = param(g, prefix + ".W");
    Tensor b = param(g, prefix + ".b");
    if (detached) return fc(x, w.detach(), b.detach());
    return fc(x, w, b);
}

Tensor KTNetModel::encode(const std::vector<const PointCloud*>& clouds) {
    require(!clouds.empty(), "encode needs at least one cloud");
    std::vector<Tensor> features;
    features.reserve(clouds.size());
    for (const PointCloud* cloud : clouds) {
        require(cloud && !cloud->points.empty(), "encode got an empty cloud");
        const int64_t n = static_cast<int64_t>(cloud->points.size());
        std::vector<double> raw;
        raw.reserve(static_cast<size_t>(3 * n));
        for (const auto& p : cloud->points) {
            raw.push_back(p.x);
            raw.push_back(p.y);
            raw.push_back(p.z);
        }
        Tensor x = Tensor::leaf({n, 3}, std::move(raw));
        Tensor h = relu(fc_layer(fe_, "fe.l0", x, false));
        h = relu(fc_layer(fe_, "fe.l1", h, false));
        h = fc_layer(fe_, "fe.l2", h, false);
        features.push_back(maxpool_points(h));
    }
    return stack_rows(features);
}

std::vector<Tensor> KTNetModel::kt_teacher(const Tensor& f0) {
    require(f0.rank() == 2 && f0.dim(1) == cfg_.k, "kt_teacher expects [B,", cfg_.k, "], got ",
            shape_str(f0.shape()));
    if (cfg_.n_stages == 0) return {f0};
    std::vector<Tensor> stages;
    Tensor h = f0;
    for (int64_t i = 1; i <= cfg_.n_stages; ++i) {
        h = relu(fc_layer(kt_, "kt.s" + std::to_string(i), h, false));
        stages.push_back(h);
    }
    return stages;
}

std::vector<Tensor> KTNetModel::kt_student(const Tensor& f0, const StudentOpts& opts) {
    require(f0.rank() == 2 && f0.dim(1) == cfg_.k, "kt_student expects [B,", cfg_.k, "], got ",
            shape_str(f0.shape()));
    require(!opts.use_kra || cfg_.with_kra,
            "kt_student asked for KRA but the model was built without recovery units");
    if (cfg_.n_stages == 0) return {f0};
    std::vector<Tensor> stages;
    Tensor h = f0;
    for (int64_t i = 1; i <= cfg_.n_stages; ++i) {
        const std::string si = std::to_string(i);
        Tensor raw = relu(fc_layer(kt_, "kt.s" + si, h, opts.detach_kt));
        if (opts.use_kra) {
            Tensor mid = relu(fc_layer(kra_, "kra.s" + si + ".f0", raw, false));
            Tensor rec = fc_layer(kra_, "kra.s" + si + ".f1", mid, false);
            h = opts.use_residual ? add(raw, rec) : rec;
        } else {
            h = raw;
        }
        stages.push_back(h);
    }
    return stages;
}

Tensor KTNetModel::kda_score(int stage_index, const Tensor& f, bool detach_params) {
    require(cfg_.with_kda, "model was built without discriminators");
    require(stage_index >= 0 && stage_index < discriminator_count(), "discriminator index ",
            stage_index, " out of range [0,", discriminator_count(), ")");
    require(f.rank() == 2 && f.dim(1) == cfg_.k, "kda_score stage ", stage_index,
            " expects feature [B,", cfg_.k, "], got ", shape_str(f.shape()));
    const std::string p = "d.s" + std::to_string(stage_index + 1);
    Tensor h = relu(fc_layer(d_, p + ".l0", f, detach_params));
    h = relu(fc_layer(d_, p + ".l1", h, detach_params));
    return fc_layer(d_, p + ".l2", h, detach_params);
}

Tensor KTNetModel::restore(const Tensor& f, bool detach_decoder) {
    require(f.rank() == 2 && f.dim(1) == cfg_.k, "restore expects feature [B,", cfg_.k,
            "], got ", shape_str(f.shape()));
    Tensor h = relu(fc_layer(mlp_, "dec.l0", f, detach_decoder));
    return fc_layer(mlp_, "dec.l1", h, detach_decoder);
}

KTNetModel::ForwardResult KTNetModel::teacher_forward(
    const std::vector<const PointCloud*>& clouds) {
    ForwardResult r;
    r.f0 = encode(clouds);
    r.stage_features = kt_teacher(r.f0);
    r.pred = restore(r.stage_features.back(), /*detach_decoder=*/false);
    return r;
}

KTNetModel::ForwardResult KTNetModel::student_forward(
    const std::vector<const PointCloud*>& clouds) {
    return student_forward(clouds, default_student_opts());
}

KTNetModel::ForwardResult KTNetModel::student_forward(
    const std::vector<const PointCloud*>& clouds, const StudentOpts& opts) {
    ForwardResult r;
    r.f0 = encode(clouds);
    r.stage_features = kt_student(r.f0, opts);
    r.pred = restore(r.stage_features.back(), /*detach_decoder=*/true);
    return r;
}

PointCloud KTNetModel::predict(const PointCloud& partial) {
    NoGradGuard no_grad;
    ForwardResult r = student_forward({&partial});
    PointCloud out;
    out.category = partial.category;
    out.instance = partial.instance;
    out.role = CloudRole::predicted;
    const auto& v = r.pred.values();
    out.points.reserve(static_cast<size_t>(cfg_.n_out));
    for (int64_t i = 0; i < cfg_.n_out; ++i)
        out.points.push_back({v[i * 3], v[i * 3 + 1], v[i * 3 + 2]});
    return out;
}

void model_to_records(KTNetModel& model, std::map<std::string, CheckpointRecord>& out) {
    for (ParamGroup* g : model.groups())
        for (auto& p : g->params)
            out["param." + p.name] = CheckpointRecord{p.tensor.shape(), p.tensor.values()};
}

void model_from_records(KTNetModel& model,
                        const std::map<std::string, CheckpointRecord>& records) {
    for (ParamGroup* g : model.groups()) {
        for (auto& p : g->params) {
            auto it = records.find("param." + p.name);
            ensure(it != records.end(), "checkpoint is missing parameter '", p.name, "'");
            ensure(it->second.shape == p.tensor.shape(), "checkpoint parameter '", p.name,
                   "' has shape ", shape_str(it->second.shape), ", model expects ",
                   shape_str(p.tensor.shape()));
            p.tensor.values() = it->second.values;
        }
    }
}

}  // namespace ktnet
