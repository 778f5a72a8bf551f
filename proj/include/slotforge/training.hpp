#pragma once

#include <chrono>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "slotforge/decoder.hpp"
#include "slotforge/dtst.hpp"
#include "slotforge/merger.hpp"
#include "slotforge/slot_attention.hpp"

namespace slotforge {

struct TrainConfig {
    enum class Stage { pretrain, stage2 };
    Stage stage = Stage::pretrain;
    double bypass_prob = 0.5;      // p_b
    double merger_drop_prob = 0.5; // p_d
    double mask_ratio = 0.15;
    MergerConfig merger;
    double lr = 4e-4;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    size_t steps = 1000, batch = 4;
    size_t T = 5;
    uint64_t seed = 0;
    bool use_dtst = true, use_merger = true, use_xslot = true;
};

// ---- optimizer ----

template <class T>
struct AdamState {
    std::map<std::string, Tensor<T>> m, v;
    int64_t step = 0;
};

template <class T>
void adam_update(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads,
                 AdamState<T>& state, const TrainConfig& cfg) {
    ++state.step;
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T corr1 = T(1) - std::pow(b1, static_cast<T>(state.step));
    const T corr2 = T(1) - std::pow(b2, static_cast<T>(state.step));
    for (auto& [name, entry] : params) {
        if (!entry.trainable) continue;
        const auto git = grads.find(name);
        require(git != grads.end(), "adam: missing gradient for " + name);
        const Tensor<T>& g = git->second;
        if (!g.all_finite()) throw ContractError("adam: non-finite gradient for " + name);
        auto mit = state.m.find(name);
        if (mit == state.m.end()) {
            Tensor<T> z;
            z.shape = entry.value.shape;
            z.data.assign(entry.value.numel(), T(0));
            state.m[name] = z;
            state.v[name] = z;
            mit = state.m.find(name);
        }
        Tensor<T>& m = mit->second;
        Tensor<T>& v = state.v[name];
        for (size_t i = 0; i < g.numel(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / corr1;
            const T vhat = v[i] / corr2;
            entry.value[i] -= static_cast<T>(cfg.lr) * mhat /
                              (std::sqrt(vhat) + static_cast<T>(cfg.adam_eps));
        }
    }
}

// ---- training state ----

// Independent named RNG streams; bypass/mask/drop-path draws cannot perturb
// the initialization stream, which keeps the p_b=1 bypass equivalence bitwise.
template <class T>
struct TrainerState {
    AdamState<T> opt;
    Rng data_rng, init_rng, branch_rng, droppath_rng, mask_rng;
    int64_t step = 0;

    static TrainerState seeded(uint64_t seed) {
        TrainerState s;
        s.data_rng = Rng(seed, "stream/data");
        s.init_rng = Rng(seed, "stream/init");
        s.branch_rng = Rng(seed, "stream/branch");
        s.droppath_rng = Rng(seed, "stream/droppath");
        s.mask_rng = Rng(seed, "stream/mask");
        return s;
    }
};

// One clip of per-frame patch features.
template <class T>
using FeatureClip = std::vector<Tensor<T>>;

// Fixed per-clip decisions; the step functions draw them from streams, the
// gradient-check harness pins them.
template <class T>
struct ClipChoices {
    bool bypass = false;
    bool apply_merger = false;
    bool use_mask = false;
    uint64_t mask_seed = 0;
    bool use_xslot = false;
    std::optional<MergerConfig> xslot_merger;
};

template <class T>
struct ClipForwardOut {
    Var loss = -1;
    std::vector<std::vector<uint8_t>> decode_valid;
    double merge_margin = std::numeric_limits<double>::infinity();
};

// Builds the full differentiable computation for one clip. Initializations
// are detached: frame t+1 starts from the value of frame t's slots (or from
// predict_next over the detached buffer). frozen_inits overrides them for
// finite-difference checks.
template <class T>
ClipForwardOut<T> clip_forward_graph(GraphCtx<T>& ctx, Model<T>& model,
                                     const FeatureClip<T>& x_frames, const TrainConfig& cfg,
                                     const ClipChoices<T>& ch, const SlotFrame<T>& first_init,
                                     const std::vector<SlotFrame<T>>* frozen_inits = nullptr,
                                     std::vector<SlotFrame<T>>* inits_out = nullptr) {
    Graph<T>& g = ctx.g;
    const size_t T_len = x_frames.size();
    require(T_len >= 1, "clip_forward: empty clip");

    std::vector<Var> s_hat(T_len);
    std::vector<std::vector<uint8_t>> valid(T_len);
    SlotSequence<T> buffer;  // detached values feeding initialization only

    for (size_t t = 0; t < T_len; ++t) {
        SlotFrame<T> init;
        if (frozen_inits) {
            init = (*frozen_inits)[t];
        } else if (t == 0) {
            init = first_init;
        } else if (ch.use_xslot) {
            init = predict_next(buffer, model, ch.xslot_merger);
        } else {
            init = buffer.frames.back();
        }
        if (inits_out) inits_out->push_back(init);
        Var x = g.leaf(x_frames[t]);
        s_hat[t] = f_sa_graph(ctx, x, init, model.dims.sa_iters);
        valid[t] = init.valid;
        SlotFrame<T> value_frame;
        value_frame.slots = g.val(s_hat[t]);
        value_frame.valid = init.valid;
        buffer.frames.push_back(std::move(value_frame));
        if (buffer.frames.size() > cfg.T) buffer.frames.erase(buffer.frames.begin());
    }

    ClipForwardOut<T> out;
    std::vector<Var> dec_in = s_hat;
    std::vector<std::vector<uint8_t>> dec_valid = valid;

    if (!ch.bypass && cfg.use_dtst) {
        MaskPlan plan;
        const MaskPlan* planp = nullptr;
        if (ch.use_mask) {
            SlotSequence<T> vals;
            for (size_t t = 0; t < T_len; ++t) {
                SlotFrame<T> f;
                f.slots = g.val(s_hat[t]);
                f.valid = valid[t];
                vals.frames.push_back(std::move(f));
            }
            plan = make_mask_plan(vals, cfg.mask_ratio, ch.mask_seed);
            planp = &plan;
        }
        dec_in = dtst_forward_graph(ctx, s_hat, valid, model.dims, 0, planp);
    }
    if (!ch.bypass && ch.apply_merger) {
        for (size_t t = 0; t < T_len; ++t) {
            const MergeDecision dec = decide_merge(g.val(dec_in[t]), dec_valid[t], cfg.merger);
            out.merge_margin = std::min(
                out.merge_margin, merge_margin(g.val(dec_in[t]), dec_valid[t], cfg.merger));
            dec_in[t] = apply_merge_graph(ctx, dec_in[t], dec);
            dec_valid[t] = dec.valid_out;
        }
    }

    Var loss = -1;
    for (size_t t = 0; t < T_len; ++t) {
        auto [recon, masks] = decode_frame_graph(ctx, dec_in[t], dec_valid[t]);
        Var l = g.mse(recon, g.leaf(x_frames[t]));
        loss = (loss < 0) ? l : g.add(loss, l);
    }
    out.loss = g.scale(loss, T(1) / static_cast<T>(T_len));
    out.decode_valid = std::move(dec_valid);
    return out;
}

template <class T>
struct StepResult {
    T loss = T(0);
    size_t bypassed_clips = 0;
    size_t merged_clips = 0;
    double active_slots_mean = 0.0;
};

namespace detail {

template <class T>
StepResult<T> run_step(Model<T>& model, const std::vector<const FeatureClip<T>*>& batch,
                       const TrainConfig& cfg, TrainerState<T>& ts,
                       const std::function<ClipChoices<T>(size_t)>& choose) {
    require(!batch.empty(), "training step: empty batch");
    Graph<T> g;
    GraphCtx<T> ctx(g, model.params);
    Var loss = -1;
    double active_sum = 0.0;
    size_t active_n = 0;
    StepResult<T> res;
    for (size_t b = 0; b < batch.size(); ++b) {
        const ClipChoices<T> ch = choose(b);
        res.bypassed_clips += ch.bypass ? 1 : 0;
        res.merged_clips += (!ch.bypass && ch.apply_merger) ? 1 : 0;
        SlotFrame<T> first =
            init_slots_gaussian<T>(model.dims.K, model.dims.d_slot, ts.init_rng);
        auto out = clip_forward_graph(ctx, model, *batch[b], cfg, ch, first);
        loss = (loss < 0) ? out.loss : g.add(loss, out.loss);
        for (const auto& v : out.decode_valid) {
            size_t n = 0;
            for (uint8_t x : v) n += x ? 1 : 0;
            active_sum += static_cast<double>(n);
            ++active_n;
        }
    }
    loss = g.scale(loss, T(1) / static_cast<T>(batch.size()));
    res.loss = g.val(loss)[0];
    if (!std::isfinite(static_cast<double>(res.loss)))
        throw ContractError("training step: non-finite loss at step " + std::to_string(ts.step));
    g.backward(loss);
    auto grads = ctx.collect_grads();
    adam_update(model.params, grads, ts.opt, cfg);
    ++ts.step;
    res.active_slots_mean = active_n ? active_sum / static_cast<double>(active_n) : 0.0;
    return res;
}

}  // namespace detail

// Stage 1 (recurrent initialization, no DTST / merger / masking).
template <class T>
StepResult<T> pretrain_step(Model<T>& model, const std::vector<const FeatureClip<T>*>& batch,
                            const TrainConfig& cfg, TrainerState<T>& ts) {
    return detail::run_step<T>(model, batch, cfg, ts, [](size_t) {
        ClipChoices<T> ch;
        ch.bypass = true;  // decode raw slots; reduces to the recurrent pipeline
        return ch;
    });
}

// Stage 2: X-slot initialization, random masking + DTST refinement, merger
// drop-path, and the stochastic bypass before decoding.
template <class T>
StepResult<T> stage2_step(Model<T>& model, const std::vector<const FeatureClip<T>*>& batch,
                          const TrainConfig& cfg, TrainerState<T>& ts) {
    return detail::run_step<T>(model, batch, cfg, ts, [&](size_t) {
        ClipChoices<T> ch;
        ch.bypass = ts.branch_rng.uniform01() < cfg.bypass_prob;
        ch.use_xslot = cfg.use_xslot && cfg.use_dtst;
        if (ch.use_xslot && cfg.use_merger) ch.xslot_merger = cfg.merger;
        if (!ch.bypass) {
            ch.apply_merger = cfg.use_merger && ts.droppath_rng.uniform01() >= cfg.merger_drop_prob;
            if (cfg.use_dtst) {
                ch.use_mask = cfg.mask_ratio > 0.0;
                ch.mask_seed = ts.mask_rng.next_u64();
            }
        }
        return ch;
    });
}

// ---- inference ----

template <class T>
struct RolloutFrame {
    SlotFrame<T> raw;           // slot-attention output
    SlotFrame<T> refined;       // slots actually decoded (post DTST + merger)
    DecodedFrame<T> dec;
    std::vector<uint8_t> m_s;   // validity after merging
};

template <class T>
struct RolloutResult {
    std::vector<RolloutFrame<T>> frames;
    double ms_per_frame = 0.0;
};

// Arbitrary-length inference with a sliding <=T buffer. Always takes the
// refinement branch (the bypass is a training-only device); no random
// masking at inference.
template <class T>
RolloutResult<T> rollout(Model<T>& model, const FeatureClip<T>& features, const TrainConfig& cfg,
                         uint64_t eval_seed) {
    require(!features.empty(), "rollout: video must have at least one frame");
    RolloutResult<T> out;
    std::deque<SlotFrame<T>> buffer;
    Rng init_rng(eval_seed, "rollout-init");
    const auto t0 = std::chrono::steady_clock::now();

    for (size_t t = 0; t < features.size(); ++t) {
        SlotFrame<T> init;
        if (t == 0) {
            init = init_slots_gaussian<T>(model.dims.K, model.dims.d_slot, init_rng);
        } else if (cfg.use_xslot && cfg.use_dtst) {
            SlotSequence<T> seq;
            seq.frames.assign(buffer.begin(), buffer.end());
            init = predict_next(seq, model,
                                cfg.use_merger ? std::optional<MergerConfig>(cfg.merger)
                                               : std::nullopt);
        } else {
            init = buffer.back();
        }

        RolloutFrame<T> rf;
        rf.raw = f_sa(features[t], init, model);
        buffer.push_back(rf.raw);
        if (buffer.size() > cfg.T) buffer.pop_front();

        SlotFrame<T> last = rf.raw;
        if (cfg.use_dtst) {
            SlotSequence<T> window;
            window.frames.assign(buffer.begin(), buffer.end());
            SlotSequence<T> refined = dtst_forward(window, model);
            last = refined.frames.back();
        }
        if (cfg.use_merger) {
            auto res = merge_frame(last, cfg.merger);
            last = res.merged;
        }
        rf.refined = last;
        rf.m_s = last.valid;
        rf.dec = decode_frame(last, model);
        out.frames.push_back(std::move(rf));
    }
    const auto t1 = std::chrono::steady_clock::now();
    out.ms_per_frame = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                       static_cast<double>(features.size());
    return out;
}

}  // namespace slotforge
