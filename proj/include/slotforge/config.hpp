#pragma once

#include <string>
#include <vector>

#include "slotforge/model.hpp"
#include "slotforge/sprites.hpp"
#include "slotforge/training.hpp"

namespace slotforge {

// Union of generator, model, merger, training and metric options. Every field
// has a default; unknown keys are rejected; validated before any compute.
struct RunConfig {
    // canvas / data
    size_t H = 64, W = 64, C = 3, P = 8, T = 5;
    size_t num_sprites = 2;
    std::vector<std::string> shapes = {"circle", "square", "triangle"};
    std::string background = "two_tone";
    bool entry_exit = false;
    double min_radius = 6.0, max_radius = 10.0;
    double min_speed = 0.5, max_speed = 2.5;

    // model dims
    size_t K = 7, d_slot = 64, D_feature = 64;
    size_t sa_iters = 3, sa_hidden = 128, dec_hidden = 128;
    size_t dtst_layers = 3, dtst_heads = 4, dtst_ff_mult = 4, T_max = 64;

    // merger
    double theta = 0.90;
    double merge_eps = 1e-8;

    // training
    double lr = 4e-4, adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    size_t steps = 1000, batch = 4;
    uint64_t seed = 0;
    double p_b = 0.5, p_d = 0.5, mask_ratio = 0.15;
    bool use_dtst = true, use_merger = true, use_xslot = true;

    void validate() const;
    std::string to_json_string() const;

    GenConfig gen_config() const;
    ModelDims model_dims() const;
    TrainConfig train_config(TrainConfig::Stage stage) const;
};

// Load from a JSON file (empty file means all defaults) and apply key=value
// overrides; values are parsed as JSON with a plain-string fallback.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides = {});

// Parse from a JSON string (used by checkpoint echoes).
RunConfig config_from_json(const std::string& json_text);

// Re-apply key=value overrides on top of an existing config and re-validate.
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides);

}  // namespace slotforge
