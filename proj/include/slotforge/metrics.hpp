#pragma once

#include <optional>
#include <vector>

#include "slotforge/mask_types.hpp"

namespace slotforge {

// Per-pixel integer labels (slot indices or GT instance ids).
struct LabelMap {
    size_t H = 0, W = 0;
    std::vector<int> px;

    LabelMap() = default;
    LabelMap(size_t h, size_t w) : H(h), W(w), px(h * w, 0) {}
    int& at(size_t r, size_t c) { return px[r * W + c]; }
    int at(size_t r, size_t c) const { return px[r * W + c]; }
};

// T stacked masks of one identity.
using MaskTube = std::vector<BinaryMask>;

double iou(const BinaryMask& a, const BinaryMask& b);
double box_iou(const Box& a, const Box& b);
std::optional<Box> mask_to_box(const BinaryMask& m);

// Mean over GT instances of the best IoU against any prediction (one frame).
double mbo_frame(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt);

// Mean over GT tubes of the best voxel IoU against any predicted tube.
double mbo_video(const std::vector<MaskTube>& pred, const std::vector<MaskTube>& gt);

// Symmetric Hausdorff distance between boundary sets (4-neighbor boundaries,
// image border counts as outside); either mask empty -> image diagonal.
double hausdorff(const BinaryMask& a, const BinaryMask& b);

// Mean over GT instances of the minimum Hausdorff distance to any prediction.
double mbhd_frame(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt);

// Adjusted Rand index on foreground pixels; fg must be nonempty.
double fg_ari(const LabelMap& pred, const LabelMap& gt, const BinaryMask& fg);

// Percent of annotated frames where some (pred, gt) box pair has IoU >= 0.5.
double corloc(const std::vector<std::vector<Box>>& pred_boxes,
              const std::vector<std::vector<Box>>& gt_boxes);

// Sufficient statistics so clips/frames reduce by summation.
struct MeanAcc {
    double sum = 0.0;
    size_t n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    void merge(const MeanAcc& o) {
        sum += o.sum;
        n += o.n;
    }
    double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
};

struct CountAcc {
    size_t hits = 0, total = 0;
    void merge(const CountAcc& o) {
        hits += o.hits;
        total += o.total;
    }
    double percent() const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
    }
};

// Per-GT-instance best-overlap / best-distance contributions of one frame.
void accumulate_mbo(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                    MeanAcc& acc);
void accumulate_mbhd(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                     MeanAcc& acc);
void accumulate_corloc(const std::vector<Box>& pred_boxes, const std::vector<Box>& gt_boxes,
                       CountAcc& acc);

}  // namespace slotforge
