#include "slotforge/eval.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "slotforge/features.hpp"
#include "slotforge/image_io.hpp"
#include "slotforge/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace slotforge {

namespace {

struct ClipScores {
    MeanAcc mbo, mbhd, ari, tubes, active;
    CountAcc corloc;
    size_t frames = 0;
};

const uint8_t kPalette[8][3] = {{230, 60, 60},  {60, 180, 75},  {65, 105, 225}, {255, 210, 60},
                                {170, 70, 200}, {70, 210, 210}, {245, 130, 48}, {240, 240, 240}};

json scores_to_json(const ClipScores& s, const std::string& id, const RunConfig& cfg) {
    json j;
    j["clip"] = id;
    j["mbo_v"] = s.tubes.mean();
    j["mbo_f"] = s.mbo.mean();
    j["mbhd"] = s.mbhd.mean();
    j["fg_ari"] = s.ari.mean();
    j["corloc"] = s.corloc.percent();
    j["mean_active_slots"] = s.active.mean();
    j["frames"] = s.frames;
    j["config"] = json::parse(cfg.to_json_string());
    return j;
}

std::string frame_file(const char* prefix, size_t t, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%05zu%s", prefix, t, ext);
    return buf;
}

// One clip end to end: rollout, prediction masks, metric accumulation,
// optional export. Tube stats go into `s.tubes`.
ClipScores eval_clip(Model<float>& model, const RunConfig& cfg, const TrainConfig& tc,
                     const LoadedClip& clip, const std::string& export_dir,
                     double* ms_accum) {
    const auto features = extract_features(clip.frames, clip.T, clip.H, clip.W, clip.C,
                                           model.params.at("feat.proj"), cfg.P);
    auto roll = rollout(model, features, tc, cfg.seed);
    if (ms_accum) *ms_accum += roll.ms_per_frame * static_cast<double>(clip.T);

    const size_t K = model.dims.K;
    ClipScores s;
    s.frames = clip.T;

    // per-slot tubes, slot index = identity
    std::vector<MaskTube> pred_tubes(K, MaskTube(clip.T, BinaryMask(clip.H, clip.W)));
    std::map<int, MaskTube> gt_tubes;

    if (!export_dir.empty()) fs::create_directories(export_dir);

    for (size_t t = 0; t < clip.T; ++t) {
        const auto& rf = roll.frames[t];
        const LabelMap labels = masks_to_labels(rf.dec.masks, rf.m_s, clip.H, clip.W, cfg.P);
        s.active.add(static_cast<double>(rf.refined.valid_count()));

        std::vector<BinaryMask> preds;
        std::vector<Box> pred_boxes;
        for (size_t k = 0; k < K; ++k) {
            if (!rf.m_s[k]) continue;
            BinaryMask m(clip.H, clip.W);
            for (size_t i = 0; i < labels.px.size(); ++i)
                m.px[i] = labels.px[i] == static_cast<int>(k) ? 1 : 0;
            pred_tubes[k][t] = m;
            if (m.empty_mask()) continue;
            if (auto b = mask_to_box(m)) pred_boxes.push_back(*b);
            preds.push_back(std::move(m));
        }

        if (clip.annotated && !clip.gt[t].empty()) {
            std::vector<BinaryMask> gts;
            std::vector<Box> gt_boxes;
            BinaryMask fg(clip.H, clip.W);
            LabelMap gt_labels(clip.H, clip.W);
            for (const Instance& inst : clip.gt[t]) {
                gts.push_back(inst.mask);
                gt_boxes.push_back(inst.box);
                for (size_t i = 0; i < fg.px.size(); ++i)
                    if (inst.mask.px[i]) {
                        fg.px[i] = 1;
                        gt_labels.px[i] = inst.id;
                    }
            }
            accumulate_mbo(preds, gts, s.mbo);
            accumulate_mbhd(preds, gts, s.mbhd);
            accumulate_corloc(pred_boxes, gt_boxes, s.corloc);
            if (!fg.empty_mask()) s.ari.add(fg_ari(labels, gt_labels, fg));
        }

        if (!export_dir.empty()) {
            ImageU8 lab;
            lab.H = clip.H;
            lab.W = clip.W;
            lab.C = 1;
            lab.px.resize(labels.px.size());
            for (size_t i = 0; i < labels.px.size(); ++i)
                lab.px[i] = static_cast<uint8_t>(labels.px[i]);
            write_pgm((fs::path(export_dir) / frame_file("labels", t, ".pgm")).string(), lab);

            // flat float32 tensor of the soft masks, K x N row-major
            std::ofstream bin((fs::path(export_dir) / frame_file("masks", t, ".bin")).string(),
                              std::ios::binary | std::ios::trunc);
            bin.write(reinterpret_cast<const char*>(rf.dec.masks.data.data()),
                      static_cast<std::streamsize>(rf.dec.masks.numel() * sizeof(float)));

            ImageU8 overlay;
            overlay.H = clip.H;
            overlay.W = clip.W;
            overlay.C = 3;
            overlay.px.resize(clip.H * clip.W * 3);
            for (size_t r = 0; r < clip.H; ++r)
                for (size_t c = 0; c < clip.W; ++c) {
                    const size_t i = r * clip.W + c;
                    const uint8_t* tint = kPalette[labels.px[i] % 8];
                    for (size_t ch = 0; ch < 3; ++ch) {
                        const float base =
                            clip.frames[((t * clip.H + r) * clip.W + c) * clip.C + ch];
                        overlay.px[3 * i + ch] = static_cast<uint8_t>(
                            std::lround(std::min(1.0f, 0.5f * base + 0.5f * tint[ch] / 255.0f) *
                                        255.0f));
                    }
                }
            write_png_rgb((fs::path(export_dir) / frame_file("overlay", t, ".png")).string(),
                          overlay);
        }

        if (clip.annotated)
            for (const Instance& inst : clip.gt[t]) {
                auto it = gt_tubes.find(inst.id);
                if (it == gt_tubes.end())
                    it = gt_tubes.emplace(inst.id, MaskTube(clip.T, BinaryMask(clip.H, clip.W)))
                             .first;
                it->second[t] = inst.mask;
            }
    }

    if (!export_dir.empty()) {
        json meta;
        meta["K"] = K;
        meta["N"] = model.dims.N;
        meta["patch"] = cfg.P;
        meta["frames"] = clip.T;
        json valid = json::array();
        for (size_t t = 0; t < clip.T; ++t) {
            json row = json::array();
            for (uint8_t v : roll.frames[t].m_s) row.push_back(static_cast<int>(v));
            valid.push_back(row);
        }
        meta["valid"] = valid;
        std::ofstream out(fs::path(export_dir) / "masks_meta.json");
        out << meta.dump(2) << "\n";
    }

    if (clip.annotated && !gt_tubes.empty()) {
        std::vector<MaskTube> pred_list, gt_list;
        for (size_t k = 0; k < K; ++k) {
            bool nonempty = false;
            for (const auto& m : pred_tubes[k]) nonempty = nonempty || !m.empty_mask();
            if (nonempty) pred_list.push_back(pred_tubes[k]);
        }
        for (auto& [id, tube] : gt_tubes) gt_list.push_back(tube);
        for (const MaskTube& g : gt_list) {
            double best = 0.0;
            for (const MaskTube& p : pred_list) {
                size_t inter = 0, uni = 0;
                for (size_t t = 0; t < g.size(); ++t)
                    for (size_t i = 0; i < g[t].px.size(); ++i) {
                        const bool pa = p[t].px[i] != 0, pb = g[t].px[i] != 0;
                        inter += (pa && pb) ? 1 : 0;
                        uni += (pa || pb) ? 1 : 0;
                    }
                if (uni > 0)
                    best = std::max(best, static_cast<double>(inter) / static_cast<double>(uni));
            }
            s.tubes.add(best);
        }
    }
    return s;
}

EvalAggregate run_at_theta(Model<float>& model, const RunConfig& cfg,
                           const std::vector<LoadedClip>& clips, const EvalOptions& opt,
                           bool main_run, bool do_export) {
    const bool write_reports = !opt.report_dir.empty();
    const TrainConfig tc = cfg.train_config(TrainConfig::Stage::stage2);
    ClipScores total;
    double ms_total = 0;
    size_t frame_total = 0;
    std::vector<json> clip_reports;
    for (const auto& clip : clips) {
        const std::string export_dir =
            do_export && !opt.export_dir.empty()
                ? (fs::path(opt.export_dir) / clip.name).string()
                : std::string();
        ClipScores s = eval_clip(model, cfg, tc, clip, export_dir, &ms_total);
        frame_total += s.frames;
        if (write_reports && main_run) clip_reports.push_back(scores_to_json(s, clip.name, cfg));
        total.mbo.merge(s.mbo);
        total.mbhd.merge(s.mbhd);
        total.ari.merge(s.ari);
        total.tubes.merge(s.tubes);
        total.active.merge(s.active);
        total.corloc.merge(s.corloc);
        total.frames += s.frames;
    }

    EvalAggregate agg;
    agg.mbo_v = total.tubes.mean();
    agg.mbo_f = total.mbo.mean();
    agg.mbhd = total.mbhd.mean();
    agg.fg_ari = total.ari.mean();
    agg.corloc = total.corloc.percent();
    agg.mean_active_slots = total.active.mean();
    agg.clips = clips.size();
    agg.frames = total.frames;
    agg.ms_per_frame = frame_total ? ms_total / static_cast<double>(frame_total) : 0.0;

    if (write_reports) {
        fs::create_directories(opt.report_dir);
        for (size_t i = 0; i < clip_reports.size(); ++i) {
            std::ofstream out(fs::path(opt.report_dir) /
                              (std::string("clip_") + clips[i].name + ".json"));
            out << clip_reports[i].dump(2) << "\n";
        }
        json j = scores_to_json(total, "aggregate", cfg);
        j["clips"] = clips.size();
        char name[64];
        std::snprintf(name, sizeof(name), "aggregate_theta_%.2f.json", cfg.theta);
        std::ofstream out(fs::path(opt.report_dir) / name);
        out << j.dump(2) << "\n";
        if (main_run) {
            std::ofstream main_out(fs::path(opt.report_dir) / "aggregate.json");
            main_out << j.dump(2) << "\n";
        }
    }
    return agg;
}

}  // namespace

LabelMap masks_to_labels(const Tensor<float>& masks, const std::vector<uint8_t>& valid,
                         size_t H, size_t W, size_t P) {
    const size_t cols = W / P;
    LabelMap out(H, W);
    for (size_t r = 0; r < H; ++r)
        for (size_t c = 0; c < W; ++c) {
            const size_t patch = (r / P) * cols + (c / P);
            int best = -1;
            float best_v = -1.0f;
            for (size_t k = 0; k < valid.size(); ++k) {
                if (!valid[k]) continue;
                const float v = masks.at(k, patch);
                if (v > best_v) {
                    best_v = v;
                    best = static_cast<int>(k);
                }
            }
            out.at(r, c) = best;
        }
    return out;
}

EvalAggregate run_eval(Model<float>& model, const RunConfig& cfg,
                       const std::vector<LoadedClip>& clips, const EvalOptions& opt) {
    require(!clips.empty(), "run_eval: no clips");
    EvalAggregate agg = run_at_theta(model, cfg, clips, opt, true, true);
    for (double theta : opt.theta_sweep) {
        if (theta == cfg.theta) continue;
        RunConfig sweep_cfg = cfg;
        sweep_cfg.theta = theta;
        sweep_cfg.validate();
        run_at_theta(model, sweep_cfg, clips, opt, true, false);
    }
    return agg;
}

void run_infer(Model<float>& model, const RunConfig& cfg, const LoadedClip& clip,
               const std::string& export_dir) {
    const TrainConfig tc = cfg.train_config(TrainConfig::Stage::stage2);
    double ms = 0;
    eval_clip(model, cfg, tc, clip, export_dir, &ms);
}

std::vector<LoadedClip> load_dataset(const std::string& data_dir) {
    std::vector<LoadedClip> clips;
    for (const std::string& dir : list_clip_dirs(data_dir)) clips.push_back(load_frames_dir(dir));
    return clips;
}

}  // namespace slotforge
