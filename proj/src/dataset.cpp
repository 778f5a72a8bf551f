#include "slotforge/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "slotforge/image_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace slotforge {

namespace {

std::string frame_name(size_t t, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05zu%s", t, ext);
    return buf;
}

std::vector<std::string> sorted_image_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string p = e.path().string();
        if (p.ends_with(".ppm") || p.ends_with(".pgm") || p.ends_with(".png"))
            files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    return files;
}

// Instance masks out of an integer label map; label c>0 becomes instance id c.
std::vector<Instance> instances_from_labels(const ImageU8& labels) {
    std::map<int, Instance> by_id;
    for (size_t r = 0; r < labels.H; ++r)
        for (size_t c = 0; c < labels.W; ++c) {
            const int id = labels.at(r, c);
            if (id == 0) continue;
            auto it = by_id.find(id);
            if (it == by_id.end()) {
                Instance inst;
                inst.id = id;
                inst.mask = BinaryMask(labels.H, labels.W);
                inst.box = Box{static_cast<int>(c), static_cast<int>(r), static_cast<int>(c),
                               static_cast<int>(r)};
                it = by_id.emplace(id, std::move(inst)).first;
            }
            Instance& inst = it->second;
            inst.mask.at(r, c) = 1;
            inst.box.x_min = std::min(inst.box.x_min, static_cast<int>(c));
            inst.box.x_max = std::max(inst.box.x_max, static_cast<int>(c));
            inst.box.y_min = std::min(inst.box.y_min, static_cast<int>(r));
            inst.box.y_max = std::max(inst.box.y_max, static_cast<int>(r));
        }
    std::vector<Instance> out;
    for (auto& [id, inst] : by_id) out.push_back(std::move(inst));
    return out;
}

}  // namespace

void save_clip(const std::string& dir, const SpriteVideo& video, uint64_t seed,
               const std::string& cfg_echo_json) {
    fs::create_directories(fs::path(dir) / "frames");
    fs::create_directories(fs::path(dir) / "masks");
    for (size_t t = 0; t < video.T; ++t) {
        ImageU8 img;
        img.H = video.H;
        img.W = video.W;
        img.C = 3;
        img.px.resize(video.H * video.W * 3);
        for (size_t i = 0; i < img.px.size(); ++i)
            img.px[i] = static_cast<uint8_t>(
                std::lround(std::clamp(video.frames[t * img.px.size() + i], 0.0f, 1.0f) * 255.0f));
        write_ppm((fs::path(dir) / "frames" / frame_name(t, ".ppm")).string(), img);

        ImageU8 labels;
        labels.H = video.H;
        labels.W = video.W;
        labels.C = 1;
        labels.px.assign(video.H * video.W, 0);
        for (const Instance& inst : video.gt[t])
            for (size_t i = 0; i < inst.mask.px.size(); ++i)
                if (inst.mask.px[i]) labels.px[i] = static_cast<uint8_t>(inst.id);
        write_pgm((fs::path(dir) / "masks" / frame_name(t, ".pgm")).string(), labels);
    }
    json meta;
    meta["seed"] = seed;
    meta["cfg"] = json::parse(cfg_echo_json);
    json ids = json::array();
    for (size_t t = 0; t < video.T; ++t) {
        json frame_ids = json::array();
        for (const Instance& inst : video.gt[t]) frame_ids.push_back(inst.id);
        ids.push_back(frame_ids);
    }
    meta["object_ids"] = ids;
    std::ofstream out(fs::path(dir) / "meta.json");
    out << meta.dump(2) << "\n";
}

LoadedClip load_frames_dir(const std::string& path) {
    if (!fs::is_directory(path)) throw IoError(path + ": not a directory");

    fs::path frames_dir = path;
    fs::path masks_dir;
    if (fs::is_directory(fs::path(path) / "frames")) {
        frames_dir = fs::path(path) / "frames";
        masks_dir = fs::path(path) / "masks";
    } else {
        masks_dir = fs::path(path) / "masks";
        if (!fs::is_directory(masks_dir)) masks_dir = fs::path(path).parent_path() / "masks";
    }

    const auto frame_files = sorted_image_files(frames_dir.string());
    if (frame_files.empty()) throw IoError(frames_dir.string() + ": no image files found");

    LoadedClip clip;
    clip.name = fs::path(path).filename().string();
    for (const std::string& f : frame_files) {
        ImageU8 img = read_image(f);
        if (img.C == 1) {  // promote grayscale frames to RGB
            ImageU8 rgb;
            rgb.H = img.H;
            rgb.W = img.W;
            rgb.C = 3;
            rgb.px.resize(img.px.size() * 3);
            for (size_t i = 0; i < img.px.size(); ++i)
                rgb.px[3 * i] = rgb.px[3 * i + 1] = rgb.px[3 * i + 2] = img.px[i];
            img = std::move(rgb);
        }
        if (clip.T == 0) {
            clip.H = img.H;
            clip.W = img.W;
            clip.C = img.C;
        } else if (img.H != clip.H || img.W != clip.W || img.C != clip.C) {
            throw IoError(f + ": frame dimensions inconsistent with the first frame");
        }
        for (uint8_t v : img.px) clip.frames.push_back(v / 255.0f);
        ++clip.T;
    }
    clip.gt.resize(clip.T);

    if (fs::is_directory(masks_dir) && masks_dir != frames_dir) {
        const auto mask_files = sorted_image_files(masks_dir.string());
        if (!mask_files.empty()) {
            if (mask_files.size() != frame_files.size())
                throw IoError(masks_dir.string() + ": mask/frame count mismatch (" +
                              std::to_string(mask_files.size()) + " vs " +
                              std::to_string(frame_files.size()) + ")");
            for (size_t t = 0; t < mask_files.size(); ++t) {
                ImageU8 labels = read_image(mask_files[t]);
                if (labels.C != 1)
                    throw IoError(mask_files[t] + ": mask must be a single-channel label map");
                if (labels.H != clip.H || labels.W != clip.W)
                    throw IoError(mask_files[t] + ": mask dimensions mismatch");
                clip.gt[t] = instances_from_labels(labels);
            }
            clip.annotated = true;
        }
    }
    return clip;
}

std::vector<std::string> list_clip_dirs(const std::string& data_dir) {
    if (!fs::is_directory(data_dir)) throw IoError(data_dir + ": not a directory");
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(data_dir))
        if (e.is_directory()) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw IoError(data_dir + ": no clip directories found");
    return dirs;
}

}  // namespace slotforge
