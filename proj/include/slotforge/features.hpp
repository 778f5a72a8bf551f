#pragma once

#include <vector>

#include "slotforge/rng.hpp"
#include "slotforge/tensor.hpp"

namespace slotforge {

// Frozen seeded random projection standing in for a pretrained backbone.
// Input per patch: flattened P*P*C pixels plus the two normalized
// patch-center coordinates; entries ~ N(0, (1/sqrt(D_feature))^2).
inline Tensor<float> make_feature_projection(size_t P, size_t C, size_t D_feature,
                                             uint64_t seed) {
    Tensor<float> proj({P * P * C + 2, D_feature});
    Rng rng(seed, "feature-projection");
    const double stddev = 1.0 / std::sqrt(static_cast<double>(D_feature));
    for (auto& v : proj.data) v = static_cast<float>(rng.normal(0.0, stddev));
    return proj;
}

// One frame of patch features: N = (H/P)*(W/P) rows of D_feature.
inline Tensor<float> extract_frame_features(const float* frame, size_t H, size_t W, size_t C,
                                            const Tensor<float>& proj, size_t P) {
    require(P > 0 && H % P == 0 && W % P == 0, "extract_features: H and W must be divisible by P");
    require(proj.rows() == P * P * C + 2, "extract_features: projection rows mismatch");
    const size_t rows = H / P, cols = W / P, N = rows * cols, D = proj.cols();
    Tensor<float> x({N, D});
    std::vector<float> patch(P * P * C + 2);
    for (size_t pr = 0; pr < rows; ++pr)
        for (size_t pc = 0; pc < cols; ++pc) {
            size_t idx = 0;
            for (size_t r = 0; r < P; ++r)
                for (size_t c = 0; c < P; ++c)
                    for (size_t ch = 0; ch < C; ++ch)
                        patch[idx++] = frame[((pr * P + r) * W + (pc * P + c)) * C + ch];
            patch[idx++] = (static_cast<float>(pc) + 0.5f) * static_cast<float>(P) /
                           static_cast<float>(W);
            patch[idx++] = (static_cast<float>(pr) + 0.5f) * static_cast<float>(P) /
                           static_cast<float>(H);
            float* out = x.row_ptr(pr * cols + pc);
            for (size_t d = 0; d < D; ++d) {
                float s = 0.0f;
                for (size_t i = 0; i < patch.size(); ++i) s += patch[i] * proj.at(i, d);
                out[d] = s;
            }
        }
    require(x.all_finite(), "extract_features: non-finite output");
    return x;
}

// All frames of a video buffer laid out T*H*W*C.
inline std::vector<Tensor<float>> extract_features(const std::vector<float>& frames, size_t T,
                                                   size_t H, size_t W, size_t C,
                                                   const Tensor<float>& proj, size_t P) {
    std::vector<Tensor<float>> out;
    out.reserve(T);
    for (size_t t = 0; t < T; ++t)
        out.push_back(extract_frame_features(frames.data() + t * H * W * C, H, W, C, proj, P));
    return out;
}

}  // namespace slotforge
