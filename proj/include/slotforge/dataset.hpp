#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slotforge/sprites.hpp"

namespace slotforge {

// A clip loaded from disk: frames plus optional instance annotations.
struct LoadedClip {
    size_t T = 0, H = 0, W = 0, C = 3;
    std::vector<float> frames;              // T*H*W*C in [0,1]
    std::vector<std::vector<Instance>> gt;  // per frame; empty lists if unannotated
    bool annotated = false;
    std::string name;
};

// Persist one generated clip as frames/%05d.ppm + masks/%05d.pgm + meta.json.
void save_clip(const std::string& dir, const SpriteVideo& video, uint64_t seed,
               const std::string& cfg_echo_json);

// Load a clip directory (frames/ + optional masks/), or a bare directory of
// image files with an optional sibling "masks" directory.
LoadedClip load_frames_dir(const std::string& path);

// Sorted clip subdirectories of a dataset root.
std::vector<std::string> list_clip_dirs(const std::string& data_dir);

}  // namespace slotforge
