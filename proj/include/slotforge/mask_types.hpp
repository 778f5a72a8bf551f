#pragma once

#include <cstdint>
#include <vector>

#include "slotforge/common.hpp"

namespace slotforge {

struct BinaryMask {
    size_t H = 0, W = 0;
    std::vector<uint8_t> px;

    BinaryMask() = default;
    BinaryMask(size_t h, size_t w) : H(h), W(w), px(h * w, 0) {}

    uint8_t& at(size_t r, size_t c) { return px[r * W + c]; }
    uint8_t at(size_t r, size_t c) const { return px[r * W + c]; }

    size_t count() const {
        size_t n = 0;
        for (uint8_t v : px) n += v ? 1 : 0;
        return n;
    }
    bool empty_mask() const { return count() == 0; }
    bool same_dims(const BinaryMask& o) const { return H == o.H && W == o.W; }
};

// Inclusive integer pixel box.
struct Box {
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    long long area() const {
        return (static_cast<long long>(x_max) - x_min + 1) *
               (static_cast<long long>(y_max) - y_min + 1);
    }
};

}  // namespace slotforge
