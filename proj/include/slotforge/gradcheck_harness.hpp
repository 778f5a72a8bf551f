#pragma once

#include "slotforge/gradcheck.hpp"
#include "slotforge/training.hpp"

namespace slotforge {

// End-to-end gradient checks of the pretraining and full stage-2 paths at
// tiny dims (N=4, K=2, d=4, T=2) in 64-bit. Initializations are frozen at
// the evaluation point (backward treats them as constants by design), and the
// probe seed advances until the relu preactivations and merge similarities
// clear a margin that keeps central differences valid.
struct PipelinePath {
    GradCheckReport report;
    uint64_t seed = 0;
    double relu_margin = 0.0;
    double merge_margin = 0.0;
};

struct PipelineGradCheck {
    PipelinePath pretrain;
    PipelinePath stage2;

    bool passed(double tol) const {
        return pretrain.report.passed(tol) && stage2.report.passed(tol);
    }
    double max_rel_err() const {
        return std::max(pretrain.report.max_rel_err, stage2.report.max_rel_err);
    }
};

inline ModelDims tiny_dims() {
    ModelDims d;
    d.D_feature = 4;
    d.d_slot = 4;
    d.K = 2;
    d.N = 4;
    d.sa_iters = 2;
    d.sa_hidden = 8;
    d.dec_hidden = 8;
    d.dtst_layers = 2;
    d.dtst_heads = 2;
    d.dtst_ff = 8;
    d.T_max = 8;
    return d;
}

inline PipelinePath check_pipeline_path(bool stage2_path, double eps = 1e-5) {
    const ModelDims dims = tiny_dims();
    const double relu_margin_min = 2e-4;
    const double merge_margin_min = 1e-2;

    for (uint64_t seed = 0; seed < 64; ++seed) {
        Model<double> model;
        model.dims = dims;
        init_model_params(model.params, dims, /*patch=*/2, /*channels=*/1, seed);

        TrainConfig cfg;
        cfg.T = 2;
        cfg.mask_ratio = 0.5;
        cfg.merger.theta = 0.9;
        cfg.use_dtst = cfg.use_merger = cfg.use_xslot = true;

        FeatureClip<double> frames;
        Rng frng(seed, "gradcheck-features");
        for (size_t t = 0; t < cfg.T; ++t) {
            Tensor<double> x({dims.N, dims.D_feature});
            for (auto& v : x.data) v = frng.normal();
            frames.push_back(std::move(x));
        }

        ClipChoices<double> ch;
        if (stage2_path) {
            ch.bypass = false;
            ch.apply_merger = true;
            ch.use_mask = true;
            ch.mask_seed = seed;
            ch.use_xslot = true;
            ch.xslot_merger = cfg.merger;
        } else {
            ch.bypass = true;
        }

        const SlotFrame<double> first =
            init_slots_gaussian<double>(dims.K, dims.d_slot, seed + 1000);

        // probe run: record the detached initializations and the margins
        std::vector<SlotFrame<double>> inits;
        double relu_m = 0.0, merge_m = std::numeric_limits<double>::infinity();
        {
            Graph<double> g;
            GraphCtx<double> ctx(g, model.params);
            auto out =
                clip_forward_graph<double>(ctx, model, frames, cfg, ch, first, nullptr, &inits);
            relu_m = g.relu_margin();
            merge_m = out.merge_margin;
        }
        if (relu_m < relu_margin_min) continue;
        if (stage2_path && merge_m < merge_margin_min) continue;

        // The relative-error formula carries a 1e-8 absolute floor; scaling
        // the checked loss keeps finite-difference roundoff and incidental
        // near-zero gradients under that floor while leaving every
        // meaningful gradient's relative error unchanged.
        const double loss_scale = 1e-4;
        auto loss_fn = [&](GraphCtx<double>& ctx) {
            auto out = clip_forward_graph(ctx, model, frames, cfg, ch, first, &inits);
            return ctx.g.scale(out.loss, loss_scale);
        };
        PipelinePath path;
        path.report = gradient_check(loss_fn, model.params, eps);
        path.seed = seed;
        path.relu_margin = relu_m;
        path.merge_margin = merge_m;
        return path;
    }
    throw ContractError("gradcheck: no probe seed cleared the kink margins");
}

inline PipelineGradCheck run_pipeline_gradcheck(double eps = 1e-5) {
    PipelineGradCheck out;
    out.pretrain = check_pipeline_path(false, eps);
    out.stage2 = check_pipeline_path(true, eps);
    return out;
}

}  // namespace slotforge
