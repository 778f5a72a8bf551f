#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "slotforge/mask_types.hpp"
#include "slotforge/rng.hpp"

namespace slotforge {

struct GenConfig {
    size_t H = 64, W = 64, C = 3;
    size_t T = 5;
    size_t num_sprites = 2;                                      // 0..4
    std::vector<std::string> shapes = {"circle", "square", "triangle"};
    std::string background = "two_tone";                         // or "solid"
    bool entry_exit = false;
    double min_radius = 6.0, max_radius = 10.0;
    double min_speed = 0.5, max_speed = 2.5;
};

// One visible instance in one frame.
struct Instance {
    int id = 0;
    BinaryMask mask;
    Box box;
};

struct SpriteVideo {
    size_t T = 0, H = 0, W = 0, C = 3;
    std::vector<float> frames;                    // T*H*W*C in [0,1]
    std::vector<std::vector<Instance>> gt;        // per frame, visible instances

    float& px(size_t t, size_t r, size_t c, size_t ch) {
        return frames[((t * H + r) * W + c) * C + ch];
    }
    float px(size_t t, size_t r, size_t c, size_t ch) const {
        return frames[((t * H + r) * W + c) * C + ch];
    }
};

SpriteVideo generate_sprite_video(const GenConfig& cfg, uint64_t seed);

}  // namespace slotforge
