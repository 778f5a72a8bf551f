// Acceptance suite: one pass/fail line per criterion, exit nonzero on any
// failure. Usage: acceptance <slotforge-binary> <workdir>

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "metric_oracles.hpp"
#include "slotforge/checkpoint.hpp"
#include "slotforge/decoder.hpp"
#include "slotforge/eval.hpp"
#include "slotforge/features.hpp"
#include "slotforge/nn_ops.hpp"
#include "slotforge/slot_attention.hpp"
#include "slotforge/training.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << criterion << " (" << name
              << "): " << detail << std::endl;
    if (!pass) ++g_failures;
}

std::string g_bin, g_work;

int run(const std::string& args) {
    const std::string cmd = g_bin + " " + args + " >> " + g_work + "/cli.log 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool files_identical(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

bool dirs_identical(const std::string& a, const std::string& b) {
    std::vector<std::string> fa, fb;
    for (auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a).string());
    for (auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b).string());
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) return false;
    for (const auto& rel : fa)
        if (!files_identical((fs::path(a) / rel).string(), (fs::path(b) / rel).string()))
            return false;
    return true;
}

double binom_tail_geq(int n, int k) {  // P(X >= k), X ~ Bin(n, 1/2)
    double p = 0;
    for (int i = k; i <= n; ++i)
        p += std::exp(std::lgamma(n + 1) - std::lgamma(i + 1) - std::lgamma(n - i + 1) -
                      n * std::log(2.0));
    return p;
}

// ---- criterion 1: gradient integrity through the CLI ----
void criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = run("gradcheck --dims tiny");
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(1, "gradient integrity", rc == 0 && secs < 120.0,
           "gradcheck exit=" + std::to_string(rc) + ", " + std::to_string(secs) + "s (< 120s)");
}

// ---- criterion 2: normalization invariants, 1000 trials each ----
void criterion2() {
    Model<float> m;
    m.dims.D_feature = 12;
    m.dims.d_slot = 8;
    m.dims.K = 5;
    m.dims.N = 10;
    m.dims.sa_iters = 1;
    m.dims.sa_hidden = 16;
    m.dims.dec_hidden = 16;
    m.dims.dtst_layers = 1;
    m.dims.dtst_heads = 2;
    m.dims.dtst_ff = 16;
    init_model_params(m.params, m.dims, 2, 1, 99);

    size_t attn_fail = 0, mask_fail = 0, soft_fail = 0;
    Rng rng(424242);
    for (int trial = 0; trial < 1000; ++trial) {
        // attention row sums over valid slots
        auto x = random_tensor<float>({10, 12}, rng, trial % 5 == 0 ? 50.0 : 2.0);
        SlotFrame<float> sf(5, 8);
        sf.slots = random_tensor<float>({5, 8}, rng);
        if (trial % 3 == 0) {
            sf.valid[trial % 5] = 0;
            sf.zero_invalid_rows();
        }
        auto [out, attn] = attention_step(x, sf, m);
        for (size_t n = 0; n < 10; ++n) {
            float s = 0;
            for (size_t k = 0; k < 5; ++k) s += attn.at(n, k);
            if (std::abs(s - 1.0f) > 1e-5f) ++attn_fail;
        }
        // decoder mask sums
        auto dec = decode_frame(sf, m);
        for (size_t n = 0; n < 10; ++n) {
            float s = 0;
            for (size_t k = 0; k < 5; ++k) s += dec.masks.at(k, n);
            if (std::abs(s - 1.0f) > 1e-5f) ++mask_fail;
        }
        // raw softmax rows at extreme magnitudes
        Tensor<float> v({4, 6});
        for (auto& e : v.data) e = static_cast<float>(rng.normal(0.0, 50.0));
        auto y = softmax(v, 1);
        for (size_t r = 0; r < 4; ++r) {
            float s = 0;
            for (size_t c = 0; c < 6; ++c) s += y.at(r, c);
            if (std::abs(s - 1.0f) > 1e-5f) ++soft_fail;
        }
    }
    report(2, "normalization invariants", attn_fail + mask_fail + soft_fail == 0,
           "failures: attention " + std::to_string(attn_fail) + ", decoder masks " +
               std::to_string(mask_fail) + ", softmax " + std::to_string(soft_fail) +
               " (1000 trials each)");
}

// ---- criterion 3: merger property suite, 500 seeded frames per property ----
void criterion3() {
    size_t fails = 0;
    std::string first_fail;
    auto fail = [&](const std::string& what, uint64_t seed) {
        ++fails;
        if (first_fail.empty()) first_fail = what + " @seed " + std::to_string(seed);
    };

    for (uint64_t seed = 0; seed < 500; ++seed) {
        Rng rng(seed, "acc-merger");
        const size_t K = 2 + rng.below(6), d = 2 + rng.below(6);
        SlotFrame<double> f(K, d);
        f.slots = random_tensor<double>({K, d}, rng);

        MergerConfig cfg;
        cfg.theta = 0.5 + rng.uniform01() * 0.5;
        double max_sim = -2;
        for (size_t i = 0; i < K; ++i)
            for (size_t j = i + 1; j < K; ++j)
                max_sim = std::max(max_sim, cosine_similarity(f.slots.row_ptr(i),
                                                              f.slots.row_ptr(j), d, 1e-8));
        auto res = merge_frame(f, cfg);
        if (max_sim < cfg.theta &&
            (!(res.valid == f.valid) || !bitwise_equal(res.merged.slots, f.slots)))
            fail("identity below threshold", seed);

        size_t prev = SIZE_MAX;
        for (double theta : {0.99, 0.9, 0.7}) {
            MergerConfig c2;
            c2.theta = theta;
            const size_t count = merge_frame(f, c2).merged.valid_count();
            if (count > prev) fail("count monotonicity", seed);
            prev = count;
        }
        if (res.merged.valid_count() < 1) fail("validity >= 1", seed);

        // fixed point within K-1 applications
        SlotFrame<double> cur = res.merged;
        for (size_t it = 0; it + 1 < K; ++it) cur = merge_frame(cur, cfg).merged;
        auto fixed = merge_frame(cur, cfg);
        if (!(fixed.valid == cur.valid) || !bitwise_equal(fixed.merged.slots, cur.slots))
            fail("fixed point", seed);

        // partition permutation equivariance
        std::vector<size_t> perm(K);
        std::iota(perm.begin(), perm.end(), size_t(0));
        for (size_t i = K - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        SlotFrame<double> pf(K, d);
        for (size_t k = 0; k < K; ++k)
            for (size_t c = 0; c < d; ++c) pf.slots.at(k, c) = f.slots.at(perm[k], c);
        auto pres = merge_frame(pf, cfg);
        auto canon = [&](const std::vector<int>& cluster_of, const std::vector<size_t>* map) {
            std::map<int, std::set<size_t>> cl;
            for (size_t k = 0; k < K; ++k)
                cl[cluster_of[k]].insert(map ? (*map)[k] : k);
            std::set<std::set<size_t>> out;
            for (auto& [c, s] : cl) out.insert(s);
            return out;
        };
        if (canon(res.cluster_of, nullptr) != canon(pres.cluster_of, &perm))
            fail("partition equivariance", seed);
    }

    // transitive trig chain (exact 3-slot example)
    {
        auto deg = [](double x) { return x * M_PI / 180.0; };
        SlotFrame<double> chain(3, 2);
        for (int i = 0; i < 3; ++i) {
            chain.slots.at(i, 0) = std::cos(deg(15.0 * i));
            chain.slots.at(i, 1) = std::sin(deg(15.0 * i));
        }
        MergerConfig cfg;
        cfg.theta = 0.96;
        auto res = merge_frame(chain, cfg);
        if (res.merged.valid_count() != 1) fail("transitive chain", 0);
    }
    report(3, "merger property suite", fails == 0,
           fails == 0 ? "all properties over 500 seeded frames"
                      : std::to_string(fails) + " failures, first: " + first_fail);
}

// ---- criterion 4: metric oracle equivalence ----
void criterion4() {
    size_t fails = 0;
    Rng rng(321);
    auto rmask = [&](double density) {
        BinaryMask m(8, 8);
        for (auto& p : m.px) p = rng.uniform01() < density ? 1 : 0;
        return m;
    };
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<BinaryMask> pred, gt;
        for (size_t i = 0, n = 1 + rng.below(3); i < n; ++i) pred.push_back(rmask(0.35));
        for (size_t i = 0, n = 1 + rng.below(3); i < n; ++i) gt.push_back(rmask(0.35));
        if (std::abs(iou(pred[0], gt[0]) - oracle::iou(pred[0], gt[0])) > 1e-6) ++fails;
        if (std::abs(hausdorff(pred[0], gt[0]) - oracle::hausdorff(pred[0], gt[0])) > 1e-6)
            ++fails;
        if (std::abs(mbo_frame(pred, gt) - oracle::mbo(pred, gt)) > 1e-6) ++fails;
        if (std::abs(mbhd_frame(pred, gt) - oracle::mbhd(pred, gt)) > 1e-6) ++fails;
        BinaryMask fg = rmask(0.6);
        if (!fg.empty_mask()) {
            LabelMap gl(8, 8), pl(8, 8);
            std::vector<int> gsub, psub;
            for (size_t i = 0; i < 64; ++i) {
                gl.px[i] = static_cast<int>(rng.below(3));
                pl.px[i] = static_cast<int>(rng.below(3));
                if (fg.px[i]) {
                    gsub.push_back(gl.px[i]);
                    psub.push_back(pl.px[i]);
                }
            }
            if (std::abs(fg_ari(pl, gl, fg) - oracle::ari(gsub, psub)) > 1e-6) ++fails;
        }
        std::vector<std::vector<Box>> pb(1), gb(1);
        for (auto& m : pred)
            if (auto b = mask_to_box(m)) pb[0].push_back(*b);
        for (auto& m : gt)
            if (auto b = mask_to_box(m)) gb[0].push_back(*b);
        if (std::abs(corloc(pb, gb) - oracle::corloc(pb, gb)) > 1e-6) ++fails;
    }

    // perfect-prediction identities
    BinaryMask obj(8, 8);
    for (int i = 18; i < 22; ++i) obj.px[i] = 1;
    LabelMap lab(8, 8);
    for (size_t i = 0; i < 64; ++i) lab.px[i] = obj.px[i] ? 2 : 0;
    bool ident = mbo_frame({obj}, {obj}) == 1.0 && mbhd_frame({obj}, {obj}) == 0.0 &&
                 fg_ari(lab, lab, obj) == 1.0 &&
                 corloc({{*mask_to_box(obj)}}, {{*mask_to_box(obj)}}) == 100.0 &&
                 mbo_video({{obj, obj}}, {{obj, obj}}) == 1.0;
    if (!ident) ++fails;

    // identity-swap tube case: mBO-V ~ 1/3 while mBO-F = 1
    BinaryMask A(4, 8), B(4, 8);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            A.at(r, c) = 1;
            B.at(r, 6 + c - 4 * 0) = 1;
        }
    MaskTube gtA(4, A), gtB(4, B);
    MaskTube pA = {A, A, B, B}, pB = {B, B, A, A};
    const double mv = mbo_video({pA, pB}, {gtA, gtB});
    bool swap_ok = std::abs(mv - 1.0 / 3.0) < 1e-6;
    for (size_t t = 0; t < 4; ++t)
        swap_ok = swap_ok && mbo_frame({pA[t], pB[t]}, {gtA[t], gtB[t]}) == 1.0;
    if (!swap_ok) ++fails;

    report(4, "metric oracle equivalence", fails == 0,
           fails == 0 ? "100 random sets + identities + identity-swap tube (mBO-V=" +
                            std::to_string(mv) + ", mBO-F=1)"
                      : std::to_string(fails) + " failures");
}

// ---- criterion 5: pipeline equivalences, bitwise ----
void criterion5() {
    auto tiny = [] {
        Model<float> m;
        m.dims.D_feature = 8;
        m.dims.d_slot = 8;
        m.dims.K = 3;
        m.dims.N = 9;
        m.dims.sa_iters = 2;
        m.dims.sa_hidden = 16;
        m.dims.dec_hidden = 16;
        m.dims.dtst_layers = 1;
        m.dims.dtst_heads = 2;
        m.dims.dtst_ff = 16;
        init_model_params(m.params, m.dims, 2, 1, 31);
        return m;
    };
    std::vector<FeatureClip<float>> clips;
    {
        Rng rng(31, "acc-clips");
        for (int i = 0; i < 3; ++i) {
            FeatureClip<float> c;
            for (int t = 0; t < 3; ++t) c.push_back(random_tensor<float>({9, 8}, rng));
            clips.push_back(std::move(c));
        }
    }
    TrainConfig pre;
    pre.T = 3;
    pre.batch = 2;
    TrainConfig bypass = pre;
    bypass.stage = TrainConfig::Stage::stage2;
    bypass.bypass_prob = 1.0;
    bypass.use_xslot = false;
    TrainConfig off = pre;
    off.stage = TrainConfig::Stage::stage2;
    off.use_dtst = off.use_merger = off.use_xslot = false;

    bool ok = true;
    std::string detail;
    for (const TrainConfig* variant : {&bypass, &off}) {
        Model<float> ma = tiny(), mb = tiny();
        TrainerState<float> ta = TrainerState<float>::seeded(31),
                            tb = TrainerState<float>::seeded(31);
        for (int step = 0; step < 5 && ok; ++step) {
            std::vector<const FeatureClip<float>*> ba, bb;
            for (size_t b = 0; b < pre.batch; ++b) {
                ba.push_back(&clips[ta.data_rng.below(clips.size())]);
                bb.push_back(&clips[tb.data_rng.below(clips.size())]);
            }
            const float la = pretrain_step(ma, ba, pre, ta).loss;
            const float lb = stage2_step(mb, bb, *variant, tb).loss;
            if (la != lb) {
                ok = false;
                detail = "loss diverged at step " + std::to_string(step);
            }
        }
        for (const auto& [name, e] : ma.params)
            if (!bitwise_equal(e.value, mb.params.at(name))) {
                ok = false;
                detail = "params diverged: " + name;
            }
    }
    report(5, "pipeline equivalences", ok,
           ok ? "p_b=1 ^ no-xslot and all-flags-off both bitwise-equal to pretraining" : detail);
}

// ---- criterion 6: overfit smoke test via the CLI ----
struct OverfitArtifacts {
    std::string data_dir, pre_ckpt, full_ckpt, report_dir, pre_log, s2_log;
    bool ok = false;
};

OverfitArtifacts criterion6() {
    OverfitArtifacts art;
    art.data_dir = g_work + "/data";
    art.pre_ckpt = g_work + "/pre.slot";
    art.full_ckpt = g_work + "/full.slot";
    art.report_dir = g_work + "/report";
    art.pre_log = g_work + "/pre.jsonl";
    art.s2_log = g_work + "/s2.jsonl";

    const auto t0 = std::chrono::steady_clock::now();
    bool ok = run("gen --out " + art.data_dir + " --num-clips 8 --seed 0") == 0;
    ok = ok && run("pretrain --data " + art.data_dir + " --out " + art.pre_ckpt + " --log " +
                   art.pre_log + " --set steps=1500") == 0;
    ok = ok && run("train --data " + art.data_dir + " --init " + art.pre_ckpt + " --out " +
                   art.full_ckpt + " --log " + art.s2_log + " --set steps=500") == 0;
    ok = ok && run("eval --ckpt " + art.full_ckpt + " --data " + art.data_dir + " --report " +
                   art.report_dir) == 0;
    const double mins =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

    double first_loss = 0, final_loss = 0, ari = 0, active = 0;
    if (ok) {
        std::ifstream pre(art.pre_log);
        std::string line, last;
        if (std::getline(pre, line)) first_loss = json::parse(line).at("loss").get<double>();
        std::ifstream s2(art.s2_log);
        while (std::getline(s2, line))
            if (!line.empty()) last = line;
        final_loss = json::parse(last).at("loss").get<double>();
        json agg = json::parse(slurp(art.report_dir + "/aggregate.json"));
        ari = agg.at("fg_ari").get<double>();
        active = agg.at("mean_active_slots").get<double>();
    }
    const bool pass = ok && final_loss <= 0.2 * first_loss && ari >= 0.5 && active < 7.0 &&
                      mins < 45.0;
    std::ostringstream detail;
    detail << "loss " << first_loss << " -> " << final_loss << " (ratio "
           << (first_loss > 0 ? final_loss / first_loss : -1) << " <= 0.2), fg_ari " << ari
           << " (>= 0.5), active " << active << " (< 7), " << mins << " min (< 45)";
    report(6, "overfit smoke test", pass, detail.str());
    art.ok = ok;
    return art;
}

// ---- criterion 7: warm-start benefit on the overfit checkpoint ----
void criterion7(const OverfitArtifacts& art) {
    if (!art.ok) {
        report(7, "warm-start benefit", false, "skipped: overfit artifacts missing");
        return;
    }
    Checkpoint ck = load_checkpoint(art.full_ckpt);
    RunConfig rc = ck.config;
    TrainConfig tc = rc.train_config(TrainConfig::Stage::stage2);
    auto clips = load_dataset(art.data_dir);

    int wins = 0;
    double sum_pn = 0, sum_gauss = 0;
    for (int i = 0; i < 100; ++i) {
        const LoadedClip& clip = clips[i % clips.size()];
        const size_t frame = (i / clips.size()) % clip.T;
        // static video: one frame repeated T times
        std::vector<float> static_frames;
        for (size_t t = 0; t < rc.T; ++t)
            static_frames.insert(static_frames.end(),
                                 clip.frames.begin() + frame * clip.H * clip.W * clip.C,
                                 clip.frames.begin() + (frame + 1) * clip.H * clip.W * clip.C);
        auto feats = extract_features(static_frames, rc.T, clip.H, clip.W, clip.C,
                                      ck.model.params.at("feat.proj"), rc.P);
        auto roll = rollout(ck.model, feats, tc, rc.seed);
        SlotSequence<float> buffer;
        for (const auto& rf : roll.frames) buffer.frames.push_back(rf.raw);
        const SlotFrame<float>& converged = roll.frames.back().refined;

        SlotFrame<float> pn = predict_next(buffer, ck.model,
                                           tc.use_merger ? std::optional<MergerConfig>(tc.merger)
                                                         : std::nullopt);
        SlotFrame<float> gauss =
            init_slots_gaussian<float>(rc.K, rc.d_slot, uint64_t(5000 + i));
        auto dist = [&](const SlotFrame<float>& a) {
            double s = 0;
            for (size_t j = 0; j < a.slots.numel(); ++j) {
                const double d = static_cast<double>(a.slots[j]) - converged.slots[j];
                s += d * d;
            }
            return std::sqrt(s);
        };
        const double d_pn = dist(pn), d_g = dist(gauss);
        sum_pn += d_pn;
        sum_gauss += d_g;
        if (d_pn < d_g) ++wins;
    }
    const double p = binom_tail_geq(100, wins);
    const bool pass = sum_pn / 100.0 < sum_gauss / 100.0 && p < 0.01;
    std::ostringstream detail;
    detail << "mean dist predict_next " << sum_pn / 100.0 << " vs gaussian " << sum_gauss / 100.0
           << ", wins " << wins << "/100, sign-test p " << p << " (< 0.01)";
    report(7, "warm-start benefit", pass, detail.str());
}

// ---- post-overfit module examples tied to the converged checkpoint ----
void converged_model_checks(const OverfitArtifacts& art) {
    if (!art.ok) {
        report(7, "converged-model examples", false, "skipped: overfit artifacts missing");
        return;
    }
    Checkpoint ck = load_checkpoint(art.full_ckpt);
    RunConfig rc = ck.config;
    TrainConfig tc = rc.train_config(TrainConfig::Stage::stage2);
    auto clips = load_dataset(art.data_dir);

    // (a) attention argmax separates the two sprites into >= 2 slots
    bool attn_ok = false;
    {
        const LoadedClip& clip = clips[0];
        auto feats = extract_features(clip.frames, clip.T, clip.H, clip.W, clip.C,
                                      ck.model.params.at("feat.proj"), rc.P);
        auto roll = rollout(ck.model, feats, tc, rc.seed);
        // re-run f_sa on the last frame with its rollout initialization to
        // recover the attention map
        SlotSequence<float> buffer;
        for (size_t t = 0; t + 1 < roll.frames.size(); ++t)
            buffer.frames.push_back(roll.frames[t].raw);
        SlotFrame<float> init =
            tc.use_xslot ? predict_next(buffer, ck.model, std::optional<MergerConfig>(tc.merger))
                         : buffer.frames.back();
        Tensor<float> attn;
        f_sa(feats.back(), init, ck.model, &attn);
        const size_t t_last = clip.T - 1;
        std::set<int> sprite_slots;
        const size_t cols = rc.W / rc.P;
        for (const Instance& inst : clip.gt[t_last]) {
            std::map<int, int> votes;
            for (size_t pr = 0; pr < rc.H / rc.P; ++pr)
                for (size_t pc = 0; pc < cols; ++pc) {
                    size_t covered = 0;
                    for (size_t r = 0; r < rc.P; ++r)
                        for (size_t c = 0; c < rc.P; ++c)
                            covered += inst.mask.at(pr * rc.P + r, pc * rc.P + c) ? 1 : 0;
                    if (covered * 2 < rc.P * rc.P) continue;  // not a sprite patch
                    const size_t n = pr * cols + pc;
                    int best = -1;
                    float best_v = -1;
                    for (size_t k = 0; k < rc.K; ++k)
                        if (attn.at(n, k) > best_v) {
                            best_v = attn.at(n, k);
                            best = static_cast<int>(k);
                        }
                    ++votes[best];
                }
            int majority = -1, mv = -1;
            for (auto& [slot, v] : votes)
                if (v > mv) {
                    mv = v;
                    majority = slot;
                }
            if (majority >= 0) sprite_slots.insert(majority);
        }
        attn_ok = sprite_slots.size() >= 2;
    }

    // (b) recurrent-init distances on a static video are non-increasing
    //     within tolerance 1e-3 on the converged model
    bool recurrent_ok = true;
    {
        const LoadedClip& clip = clips[1];
        std::vector<float> static_frames;
        for (size_t t = 0; t < 2 * rc.T; ++t)
            static_frames.insert(static_frames.end(), clip.frames.begin(),
                                 clip.frames.begin() + clip.H * clip.W * clip.C);
        auto feats = extract_features(static_frames, 2 * rc.T, clip.H, clip.W, clip.C,
                                      ck.model.params.at("feat.proj"), rc.P);
        SlotFrame<float> s = init_slots_gaussian<float>(rc.K, rc.d_slot, uint64_t(rc.seed));
        SlotFrame<float> prev = s;
        double prev_d = -1;
        for (size_t t = 0; t < feats.size(); ++t) {
            SlotFrame<float> cur = f_sa(feats[t], s, ck.model);
            if (t > 0) {
                double d = 0;
                for (size_t j = 0; j < cur.slots.numel(); ++j) {
                    const double diff =
                        static_cast<double>(cur.slots[j]) - prev.slots[j];
                    d += diff * diff;
                }
                d = std::sqrt(d);
                if (prev_d >= 0 && d > prev_d + 1e-3) recurrent_ok = false;
                prev_d = d;
            }
            prev = cur;
            s = cur;  // recurrent carry
        }
    }

    // (c) static-video label maps stable across frames for >= 95% of pixels
    bool stable_ok = false;
    double stable_frac = 0;
    {
        const LoadedClip& clip = clips[2];
        std::vector<float> static_frames;
        for (size_t t = 0; t < rc.T; ++t)
            static_frames.insert(static_frames.end(), clip.frames.begin(),
                                 clip.frames.begin() + clip.H * clip.W * clip.C);
        auto feats = extract_features(static_frames, rc.T, clip.H, clip.W, clip.C,
                                      ck.model.params.at("feat.proj"), rc.P);
        auto roll = rollout(ck.model, feats, tc, rc.seed);
        std::vector<LabelMap> labels;
        for (const auto& rf : roll.frames)
            labels.push_back(masks_to_labels(rf.dec.masks, rf.m_s, clip.H, clip.W, rc.P));
        size_t stable = 0;
        for (size_t i = 0; i < labels[0].px.size(); ++i) {
            bool same = true;
            for (size_t t = 1; t < labels.size(); ++t) same = same && labels[t].px[i] == labels[0].px[i];
            stable += same ? 1 : 0;
        }
        stable_frac = static_cast<double>(stable) / static_cast<double>(labels[0].px.size());
        stable_ok = stable_frac >= 0.95;
    }

    std::ostringstream detail;
    detail << "attn sprite separation " << (attn_ok ? "yes" : "NO") << ", recurrent distances "
           << (recurrent_ok ? "non-increasing" : "INCREASED") << ", static label stability "
           << stable_frac * 100 << "% (>= 95%)";
    report(7, "converged-model examples", attn_ok && recurrent_ok && stable_ok, detail.str());
}

// ---- criterion 8: throughput (informational) ----
void criterion8(const OverfitArtifacts& art) {
    if (!art.ok) {
        report(8, "throughput report", false, "skipped: overfit artifacts missing");
        return;
    }
    Checkpoint ck = load_checkpoint(art.full_ckpt);
    RunConfig rc = ck.config;
    TrainConfig tc = rc.train_config(TrainConfig::Stage::stage2);
    auto clips = load_dataset(art.data_dir);
    auto feats = extract_features(clips[0].frames, clips[0].T, clips[0].H, clips[0].W,
                                  clips[0].C, ck.model.params.at("feat.proj"), rc.P);
    auto roll = rollout(ck.model, feats, tc, rc.seed);  // warm
    roll = rollout(ck.model, feats, tc, rc.seed);
    std::ostringstream detail;
    detail << roll.ms_per_frame << " ms/frame at 64x64 (soft target < 100 ms; informational)";
    report(8, "throughput report", true, detail.str());
}

// ---- criterion 9: determinism of commands ----
void criterion9(const OverfitArtifacts& art) {
    bool ok = true;
    std::string detail = "gen, pretrain, eval re-runs byte-identical";

    if (run("gen --out " + g_work + "/det_a --num-clips 2 --seed 3") != 0 ||
        run("gen --out " + g_work + "/det_b --num-clips 2 --seed 3") != 0 ||
        !dirs_identical(g_work + "/det_a", g_work + "/det_b")) {
        ok = false;
        detail = "gen outputs differ";
    }
    if (ok) {
        const std::string p1 = g_work + "/det1.slot", p2 = g_work + "/det2.slot";
        if (run("pretrain --data " + g_work + "/det_a --out " + p1 + " --set steps=20") != 0 ||
            run("pretrain --data " + g_work + "/det_a --out " + p2 + " --set steps=20") != 0 ||
            !files_identical(p1, p2)) {
            ok = false;
            detail = "pretrain checkpoints differ";
        }
    }
    if (ok && art.ok) {
        if (run("eval --ckpt " + art.full_ckpt + " --data " + art.data_dir + " --report " +
                g_work + "/rep_a") != 0 ||
            run("eval --ckpt " + art.full_ckpt + " --data " + art.data_dir + " --report " +
                g_work + "/rep_b") != 0 ||
            !dirs_identical(g_work + "/rep_a", g_work + "/rep_b")) {
            ok = false;
            detail = "eval reports differ";
        }
    }
    report(9, "determinism", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: acceptance <slotforge-binary> <workdir>\n";
        return 2;
    }
    g_bin = argv[1];
    g_work = argv[2];
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    OverfitArtifacts art = criterion6();
    criterion7(art);
    converged_model_checks(art);
    criterion8(art);
    criterion9(art);

    std::cout << (g_failures == 0 ? "ACCEPTANCE: all criteria passed"
                                  : "ACCEPTANCE: " + std::to_string(g_failures) + " failures")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
