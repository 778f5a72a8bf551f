#include "slotforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace slotforge {

namespace {

struct Pt {
    int r, c;
};

std::vector<Pt> boundary_points(const BinaryMask& m) {
    std::vector<Pt> pts;
    const int H = static_cast<int>(m.H), W = static_cast<int>(m.W);
    auto filled = [&](int r, int c) {
        return r >= 0 && r < H && c >= 0 && c < W && m.at(r, c) != 0;
    };
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            if (!m.at(r, c)) continue;
            if (!filled(r - 1, c) || !filled(r + 1, c) || !filled(r, c - 1) || !filled(r, c + 1))
                pts.push_back({r, c});
        }
    return pts;
}

double directed_sup_inf(const std::vector<Pt>& from, const std::vector<Pt>& to) {
    double sup = 0.0;
    for (const Pt& p : from) {
        double best = std::numeric_limits<double>::max();
        for (const Pt& q : to) {
            const double dr = p.r - q.r, dc = p.c - q.c;
            best = std::min(best, dr * dr + dc * dc);
        }
        sup = std::max(sup, best);
    }
    return std::sqrt(sup);
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double iou(const BinaryMask& a, const BinaryMask& b) {
    require(a.same_dims(b), "iou: mask dimensions mismatch");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        const bool pa = a.px[i] != 0, pb = b.px[i] != 0;
        inter += (pa && pb) ? 1 : 0;
        uni += (pa || pb) ? 1 : 0;
    }
    if (uni == 0) return 0.0;  // both empty, by convention
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double box_iou(const Box& a, const Box& b) {
    const int ix0 = std::max(a.x_min, b.x_min), ix1 = std::min(a.x_max, b.x_max);
    const int iy0 = std::max(a.y_min, b.y_min), iy1 = std::min(a.y_max, b.y_max);
    if (ix0 > ix1 || iy0 > iy1) return 0.0;
    const double inter = static_cast<double>(ix1 - ix0 + 1) * (iy1 - iy0 + 1);
    const double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
    return inter / uni;
}

std::optional<Box> mask_to_box(const BinaryMask& m) {
    int xmin = static_cast<int>(m.W), xmax = -1, ymin = static_cast<int>(m.H), ymax = -1;
    for (size_t r = 0; r < m.H; ++r)
        for (size_t c = 0; c < m.W; ++c)
            if (m.at(r, c)) {
                xmin = std::min(xmin, static_cast<int>(c));
                xmax = std::max(xmax, static_cast<int>(c));
                ymin = std::min(ymin, static_cast<int>(r));
                ymax = std::max(ymax, static_cast<int>(r));
            }
    if (xmax < 0) return std::nullopt;
    return Box{xmin, ymin, xmax, ymax};
}

void accumulate_mbo(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                    MeanAcc& acc) {
    for (const BinaryMask& g : gt) {
        double best = 0.0;  // max over the empty prediction set is 0
        for (const BinaryMask& p : pred) best = std::max(best, iou(p, g));
        acc.add(best);
    }
}

double mbo_frame(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
    MeanAcc acc;
    accumulate_mbo(pred, gt, acc);
    return acc.mean();
}

double mbo_video(const std::vector<MaskTube>& pred, const std::vector<MaskTube>& gt) {
    MeanAcc acc;
    for (const MaskTube& g : gt) {
        double best = 0.0;
        for (const MaskTube& p : pred) {
            require(p.size() == g.size(), "mbo_video: tube length mismatch");
            size_t inter = 0, uni = 0;
            for (size_t t = 0; t < g.size(); ++t) {
                require(p[t].same_dims(g[t]), "mbo_video: mask dimensions mismatch");
                for (size_t i = 0; i < g[t].px.size(); ++i) {
                    const bool pa = p[t].px[i] != 0, pb = g[t].px[i] != 0;
                    inter += (pa && pb) ? 1 : 0;
                    uni += (pa || pb) ? 1 : 0;
                }
            }
            if (uni > 0)
                best = std::max(best, static_cast<double>(inter) / static_cast<double>(uni));
        }
        acc.add(best);
    }
    return acc.mean();
}

double hausdorff(const BinaryMask& a, const BinaryMask& b) {
    require(a.same_dims(b), "hausdorff: mask dimensions mismatch");
    const auto ba = boundary_points(a);
    const auto bb = boundary_points(b);
    if (ba.empty() || bb.empty())
        return std::sqrt(static_cast<double>(a.H * a.H + a.W * a.W));
    return std::max(directed_sup_inf(ba, bb), directed_sup_inf(bb, ba));
}

void accumulate_mbhd(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt,
                     MeanAcc& acc) {
    for (const BinaryMask& g : gt) {
        double best = std::sqrt(static_cast<double>(g.H * g.H + g.W * g.W));
        for (const BinaryMask& p : pred) best = std::min(best, hausdorff(p, g));
        acc.add(best);
    }
}

double mbhd_frame(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
    MeanAcc acc;
    accumulate_mbhd(pred, gt, acc);
    return acc.mean();
}

double fg_ari(const LabelMap& pred, const LabelMap& gt, const BinaryMask& fg) {
    require(pred.H == gt.H && pred.W == gt.W && fg.H == gt.H && fg.W == gt.W,
            "fg_ari: dimensions mismatch");
    std::map<std::pair<int, int>, size_t> contingency;
    std::map<int, size_t> a_sums, b_sums;
    size_t n = 0;
    for (size_t i = 0; i < fg.px.size(); ++i) {
        if (!fg.px[i]) continue;
        ++n;
        ++contingency[{gt.px[i], pred.px[i]}];
        ++a_sums[gt.px[i]];
        ++b_sums[pred.px[i]];
    }
    require(n > 0, "fg_ari: empty foreground");
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (const auto& [k, v] : contingency) sum_ij += choose2(static_cast<double>(v));
    for (const auto& [k, v] : a_sums) sum_a += choose2(static_cast<double>(v));
    for (const auto& [k, v] : b_sums) sum_b += choose2(static_cast<double>(v));
    const double total_pairs = choose2(static_cast<double>(n));
    const double expected = total_pairs > 0 ? sum_a * sum_b / total_pairs : 0.0;
    const double denom = 0.5 * (sum_a + sum_b) - expected;
    if (denom == 0.0) {
        // degenerate: identical partitions score 1, anything else 0
        const bool identical =
            contingency.size() == a_sums.size() && contingency.size() == b_sums.size();
        return identical ? 1.0 : 0.0;
    }
    return (sum_ij - expected) / denom;
}

void accumulate_corloc(const std::vector<Box>& pred_boxes, const std::vector<Box>& gt_boxes,
                       CountAcc& acc) {
    if (gt_boxes.empty()) return;  // unannotated frame, not scored
    ++acc.total;
    for (const Box& g : gt_boxes)
        for (const Box& p : pred_boxes)
            if (box_iou(p, g) >= 0.5) {
                ++acc.hits;
                return;
            }
}

double corloc(const std::vector<std::vector<Box>>& pred_boxes,
              const std::vector<std::vector<Box>>& gt_boxes) {
    require(pred_boxes.size() == gt_boxes.size(), "corloc: frame count mismatch");
    CountAcc acc;
    for (size_t t = 0; t < gt_boxes.size(); ++t) accumulate_corloc(pred_boxes[t], gt_boxes[t], acc);
    return acc.percent();
}

}  // namespace slotforge
