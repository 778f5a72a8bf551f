#pragma once

#include <string>
#include <vector>

#include "slotforge/config.hpp"
#include "slotforge/dataset.hpp"
#include "slotforge/metrics.hpp"

namespace slotforge {

struct EvalOptions {
    std::string report_dir;          // per-clip + aggregate JSON when set
    std::string export_dir;          // label PGMs, mask tensors, overlay PNGs when set
    std::vector<double> theta_sweep; // one aggregate per extra theta
};

struct EvalAggregate {
    double mbo_v = 0, mbo_f = 0, mbhd = 0, fg_ari = 0, corloc = 0;
    double mean_active_slots = 0;
    double ms_per_frame = 0;  // stdout only, never written into reports
    size_t clips = 0, frames = 0;
};

// Rollout + metric suite over annotated clips; writes reports/exports per the
// options and returns the aggregate at cfg.theta.
EvalAggregate run_eval(Model<float>& model, const RunConfig& cfg,
                       const std::vector<LoadedClip>& clips, const EvalOptions& opt);

// Rollout + mask export for one (possibly unannotated) clip.
void run_infer(Model<float>& model, const RunConfig& cfg, const LoadedClip& clip,
               const std::string& export_dir);

std::vector<LoadedClip> load_dataset(const std::string& data_dir);

// Per-pixel argmax label map over the valid slots of one decoded frame
// (patch-resolution masks upsampled by nearest neighbor).
LabelMap masks_to_labels(const Tensor<float>& masks, const std::vector<uint8_t>& valid,
                         size_t H, size_t W, size_t P);

}  // namespace slotforge
