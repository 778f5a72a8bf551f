#pragma once

#include <string>

#include "slotforge/config.hpp"
#include "slotforge/training.hpp"

namespace slotforge {

// Single-file binary checkpoint:
//   "SLOTCKPT" | u32 version | u64 manifest length | manifest JSON | payload
// The manifest names every tensor (name, dtype, shape, byte offset), echoes
// the effective config, and records stage, step, RNG stream states and a
// payload CRC32. Payload is raw little-endian float32.
struct Checkpoint {
    RunConfig config;
    std::string stage;  // "pretrain" or "stage2"
    Model<float> model;
    TrainerState<float> trainer;
};

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const TrainerState<float>& trainer, const std::string& stage,
                     const RunConfig& config);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace slotforge
