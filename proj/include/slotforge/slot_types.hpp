#pragma once

#include <cstdint>
#include <vector>

#include "slotforge/tensor.hpp"

namespace slotforge {

// K slot vectors plus a validity mask; invalid rows are exactly zero and at
// least one slot is always valid.
template <class T>
struct SlotFrame {
    Tensor<T> slots;              // K x d_slot
    std::vector<uint8_t> valid;   // length K

    SlotFrame() = default;
    SlotFrame(size_t K, size_t d) : slots({K, d}), valid(K, 1) {}

    size_t K() const { return slots.rows(); }
    size_t d() const { return slots.cols(); }

    size_t valid_count() const {
        size_t n = 0;
        for (uint8_t v : valid) n += v ? 1 : 0;
        return n;
    }

    std::vector<size_t> valid_indices() const {
        std::vector<size_t> idx;
        for (size_t k = 0; k < valid.size(); ++k)
            if (valid[k]) idx.push_back(k);
        return idx;
    }

    void zero_invalid_rows() {
        for (size_t k = 0; k < valid.size(); ++k)
            if (!valid[k]) std::fill(slots.row_ptr(k), slots.row_ptr(k) + d(), T(0));
    }

    void check_invariants() const {
        require(valid.size() == K(), "SlotFrame: validity length mismatch");
        require(valid_count() >= 1, "SlotFrame: at least one slot must be valid");
        for (size_t k = 0; k < valid.size(); ++k)
            if (!valid[k])
                for (size_t c = 0; c < d(); ++c)
                    require(slots.at(k, c) == T(0), "SlotFrame: invalid rows must be zero");
    }
};

template <class T>
struct SlotSequence {
    std::vector<SlotFrame<T>> frames;

    size_t T_len() const { return frames.size(); }
    size_t K() const { return frames.empty() ? 0 : frames[0].K(); }
    size_t d() const { return frames.empty() ? 0 : frames[0].d(); }

    void check_invariants() const {
        for (const auto& f : frames) {
            require(f.K() == K() && f.d() == d(), "SlotSequence: inconsistent frame shapes");
            f.check_invariants();
        }
    }
};

}  // namespace slotforge
