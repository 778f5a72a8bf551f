// slotforge: dynamic-slot-count object-centric video learning on synthetic
// sprite clips. Subcommands: gen, pretrain, train, eval, infer, gradcheck.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "slotforge/checkpoint.hpp"
#include "slotforge/dataset.hpp"
#include "slotforge/eval.hpp"
#include "slotforge/features.hpp"
#include "slotforge/gradcheck_harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace slotforge;

namespace {

std::vector<FeatureClip<float>> featurize_dataset(const std::vector<LoadedClip>& clips,
                                                  const Model<float>& model,
                                                  const RunConfig& cfg) {
    std::vector<FeatureClip<float>> out;
    const Tensor<float>& proj = model.params.at("feat.proj");
    for (const auto& clip : clips) {
        if (clip.H != cfg.H || clip.W != cfg.W || clip.C != cfg.C)
            throw ConfigError("clip " + clip.name + " has dims " + std::to_string(clip.H) + "x" +
                              std::to_string(clip.W) + " but the config expects " +
                              std::to_string(cfg.H) + "x" + std::to_string(cfg.W));
        if (clip.T < cfg.T)
            throw ConfigError("clip " + clip.name + " is shorter than the window T=" +
                              std::to_string(cfg.T));
        out.push_back(extract_features(clip.frames, clip.T, clip.H, clip.W, clip.C, proj, cfg.P));
    }
    return out;
}

void train_loop(Model<float>& model, TrainerState<float>& ts, TrainConfig::Stage stage,
                const RunConfig& rc, const std::vector<FeatureClip<float>>& clips,
                const std::string& out_path, const std::string& log_path) {
    const TrainConfig cfg = rc.train_config(stage);
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, ts.step > 0 ? std::ios::app : std::ios::trunc);
        if (!log) throw IoError("cannot open training log " + log_path);
    }
    std::vector<FeatureClip<float>> windows(cfg.batch);
    while (ts.step < static_cast<int64_t>(cfg.steps)) {
        std::vector<const FeatureClip<float>*> batch;
        for (size_t b = 0; b < cfg.batch; ++b) {
            const size_t ci = ts.data_rng.below(clips.size());
            const FeatureClip<float>& clip = clips[ci];
            if (clip.size() == cfg.T) {
                batch.push_back(&clip);
            } else {
                const size_t start = ts.data_rng.below(clip.size() - cfg.T + 1);
                windows[b].assign(clip.begin() + start, clip.begin() + start + cfg.T);
                batch.push_back(&windows[b]);
            }
        }
        const StepResult<float> res = stage == TrainConfig::Stage::pretrain
                                          ? pretrain_step(model, batch, cfg, ts)
                                          : stage2_step(model, batch, cfg, ts);
        if (log) {
            json line;
            line["step"] = ts.step;
            line["loss"] = res.loss;
            line["branch"] = stage == TrainConfig::Stage::pretrain
                                 ? "pretrain"
                                 : (res.bypassed_clips == cfg.batch
                                        ? "bypass"
                                        : (res.bypassed_clips == 0 ? "refine" : "mixed"));
            line["bypassed_clips"] = res.bypassed_clips;
            line["active_slots_mean"] = res.active_slots_mean;
            log << line.dump() << "\n";
        }
        if (ts.step % 100 == 0 || ts.step == static_cast<int64_t>(cfg.steps))
            std::cout << "step " << ts.step << "/" << cfg.steps << " loss " << res.loss
                      << " active " << res.active_slots_mean << "\n";
    }
    save_checkpoint(out_path, model, ts,
                    stage == TrainConfig::Stage::pretrain ? "pretrain" : "stage2", rc);
    std::cout << "saved checkpoint " << out_path << "\n";
}

std::vector<double> parse_sweep(const std::string& csv) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos < csv.size()) {
        size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        out.push_back(std::stod(csv.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slotforge: object-centric video slot learning"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path, init_path, resume_path, report_dir;
    std::string video_dir, export_dir, log_path, dims = "tiny", sweep_csv;
    std::vector<std::string> overrides;
    uint64_t gen_seed = 0;
    bool gen_seed_set = false;
    size_t num_clips = 64;
    bool cold_start = false, no_dtst = false, no_merger = false, no_xslot = false;
    bool export_masks = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file (empty = defaults)");
        cmd->add_option("--set", overrides, "config overrides key=value")->take_all();
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a seeded sprite dataset");
    add_common(gen);
    gen->add_option("--seed", gen_seed, "base seed (default: config seed)")
        ->each([&](const std::string&) { gen_seed_set = true; });
    gen->add_option("--out", out_path, "output dataset directory")->required();
    gen->add_option("--num-clips", num_clips, "number of clips");

    CLI::App* pre = app.add_subcommand("pretrain", "stage-1 training (recurrent init)");
    add_common(pre);
    pre->add_option("--data", data_dir, "dataset directory")->required();
    pre->add_option("--out", out_path, "output checkpoint")->required();
    pre->add_option("--resume", resume_path, "resume from a pretrain checkpoint");
    pre->add_option("--log", log_path, "per-step metrics log (jsonl)");

    CLI::App* trn = app.add_subcommand("train", "stage-2 training (DTST + merger + X-slot)");
    add_common(trn);
    trn->add_option("--data", data_dir, "dataset directory")->required();
    trn->add_option("--out", out_path, "output checkpoint")->required();
    trn->add_option("--init", init_path, "pretrain checkpoint to start from");
    trn->add_option("--resume", resume_path, "resume from a stage2 checkpoint");
    trn->add_flag("--cold-start", cold_start, "train stage 2 from scratch");
    trn->add_flag("--no-dtst", no_dtst, "ablation: disable DTST");
    trn->add_flag("--no-merger", no_merger, "ablation: disable the slot merger");
    trn->add_flag("--no-xslot", no_xslot, "ablation: disable next-slot initialization");
    trn->add_option("--log", log_path, "per-step metrics log (jsonl)");

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--ckpt", init_path, "checkpoint")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--report", report_dir, "report output directory")->required();
    ev->add_option("--theta-sweep", sweep_csv, "comma-separated merger thresholds");
    ev->add_flag("--export-masks", export_masks, "write label maps, soft masks and overlays");
    ev->add_option("--set", overrides, "config overrides key=value")->take_all();

    CLI::App* inf = app.add_subcommand("infer", "run inference on one clip directory");
    inf->add_option("--ckpt", init_path, "checkpoint")->required();
    inf->add_option("--video", video_dir, "clip directory (frames)")->required();
    inf->add_option("--export-masks", export_dir, "output directory")->required();

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of both paths");
    gc->add_option("--dims", dims, "dimension preset (tiny)");

    try {
        app.parse(argc, argv);

        if (gen->parsed()) {
            RunConfig rc = parse_config(config_path, overrides);
            const uint64_t base = gen_seed_set ? gen_seed : rc.seed;
            fs::create_directories(out_path);
            for (size_t i = 0; i < num_clips; ++i) {
                SpriteVideo video = generate_sprite_video(rc.gen_config(), base + i);
                char name[32];
                std::snprintf(name, sizeof(name), "clip_%05zu", i);
                save_clip((fs::path(out_path) / name).string(), video, base + i,
                          rc.to_json_string());
            }
            std::cout << "wrote " << num_clips << " clips to " << out_path << "\n";
        }

        if (pre->parsed() || trn->parsed()) {
            const bool is_pre = pre->parsed();
            Model<float> model;
            TrainerState<float> ts;
            RunConfig rc;
            if (!resume_path.empty()) {
                Checkpoint ck = load_checkpoint(resume_path);
                const std::string want = is_pre ? "pretrain" : "stage2";
                if (ck.stage != want)
                    throw ConfigError("--resume checkpoint is stage '" + ck.stage +
                                      "', expected '" + want + "'");
                rc = apply_overrides(ck.config, overrides);
                model = std::move(ck.model);
                ts = std::move(ck.trainer);
            } else {
                rc = parse_config(config_path, overrides);
                if (!is_pre) {
                    if (no_dtst) rc.use_dtst = false;
                    if (no_merger) rc.use_merger = false;
                    if (no_xslot) rc.use_xslot = false;
                    rc.validate();
                    if (init_path.empty() && !cold_start)
                        throw ConfigError(
                            "train: stage 2 requires --init <pretrain checkpoint> or "
                            "--cold-start");
                }
                if (!is_pre && !init_path.empty()) {
                    Checkpoint ck = load_checkpoint(init_path);
                    model.params = std::move(ck.model.params);
                    model.dims = rc.model_dims();
                    model.dims.validate();
                } else {
                    model.dims = rc.model_dims();
                    init_model_params(model.params, model.dims, rc.P, rc.C, rc.seed);
                }
                ts = TrainerState<float>::seeded(rc.seed);
            }
            auto clips = load_dataset(data_dir);
            auto features = featurize_dataset(clips, model, rc);
            train_loop(model, ts,
                       is_pre ? TrainConfig::Stage::pretrain : TrainConfig::Stage::stage2, rc,
                       features, out_path, log_path);
        }

        if (ev->parsed()) {
            Checkpoint ck = load_checkpoint(init_path);
            RunConfig rc = apply_overrides(ck.config, overrides);
            auto clips = load_dataset(data_dir);
            for (const auto& clip : clips)
                if (clip.H != rc.H || clip.W != rc.W)
                    throw ConfigError("clip " + clip.name + " is " + std::to_string(clip.H) +
                                      "x" + std::to_string(clip.W) + " but checkpoint '" +
                                      init_path + "' was trained at " + std::to_string(rc.H) +
                                      "x" + std::to_string(rc.W));
            EvalOptions opt;
            opt.report_dir = report_dir;
            if (export_masks) opt.export_dir = (fs::path(report_dir) / "masks").string();
            if (!sweep_csv.empty()) opt.theta_sweep = parse_sweep(sweep_csv);
            EvalAggregate agg = run_eval(ck.model, rc, clips, opt);
            std::cout << "mbo_v " << agg.mbo_v << "  mbo_f " << agg.mbo_f << "  mbhd "
                      << agg.mbhd << "  fg_ari " << agg.fg_ari << "  corloc " << agg.corloc
                      << "  active " << agg.mean_active_slots << "\n";
            std::cout << "per-frame forward latency: " << agg.ms_per_frame
                      << " ms (soft target < 100 ms)\n";
        }

        if (inf->parsed()) {
            Checkpoint ck = load_checkpoint(init_path);
            LoadedClip clip = load_frames_dir(video_dir);
            if (clip.H != ck.config.H || clip.W != ck.config.W)
                throw ConfigError("video " + video_dir + " is " + std::to_string(clip.H) + "x" +
                                  std::to_string(clip.W) + " but checkpoint '" + init_path +
                                  "' was trained at " + std::to_string(ck.config.H) + "x" +
                                  std::to_string(ck.config.W));
            run_infer(ck.model, ck.config, clip, export_dir);
            std::cout << "wrote masks to " << export_dir << "\n";
        }

        if (gc->parsed()) {
            if (dims != "tiny") throw ConfigError("gradcheck: only --dims tiny is available");
            PipelineGradCheck res = run_pipeline_gradcheck();
            std::cout << "pretrain path: max_rel_err " << res.pretrain.report.max_rel_err
                      << " over " << res.pretrain.report.checked << " entries (seed "
                      << res.pretrain.seed << ")\n";
            std::cout << "stage2 path:   max_rel_err " << res.stage2.report.max_rel_err
                      << " over " << res.stage2.report.checked << " entries (seed "
                      << res.stage2.seed << ")\n";
            if (!res.passed(1e-4)) {
                std::cout << "FAIL: gradient check exceeded 1e-4\n";
                return 1;
            }
            std::cout << "PASS: both paths under 1e-4\n";
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
