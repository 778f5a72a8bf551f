#include "slotforge/checkpoint.hpp"

#include <json.hpp>

#include <array>
#include <cstring>
#include <fstream>

using json = nlohmann::json;

namespace slotforge {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'O', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

uint32_t crc32(const uint8_t* data, size_t n) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        init = true;
    }
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void put_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<char*>(b), 8);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError(path + ": truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& in, const std::string& path) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError(path + ": truncated header");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

json rng_to_json(const Rng& rng) {
    json arr = json::array();
    for (const auto& w : rng.state_hex()) arr.push_back(w);
    return arr;
}

Rng rng_from_json(const json& arr) {
    Rng rng;
    std::vector<std::string> words;
    for (const auto& w : arr) words.push_back(w.get<std::string>());
    rng.set_state_hex(words);
    return rng;
}

void append_tensor(json& tensors, std::vector<float>& payload, const std::string& kind,
                   const std::string& name, const Tensor<float>& t, bool trainable) {
    json entry;
    entry["kind"] = kind;
    entry["name"] = name;
    entry["dtype"] = "f32";
    entry["shape"] = t.shape;
    entry["offset"] = payload.size() * sizeof(float);
    entry["trainable"] = trainable;
    tensors.push_back(entry);
    payload.insert(payload.end(), t.data.begin(), t.data.end());
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const TrainerState<float>& trainer, const std::string& stage,
                     const RunConfig& config) {
    json tensors = json::array();
    std::vector<float> payload;
    for (const auto& [name, entry] : model.params)
        append_tensor(tensors, payload, "param", name, entry.value, entry.trainable);
    for (const auto& [name, t] : trainer.opt.m)
        append_tensor(tensors, payload, "adam_m", name, t, false);
    for (const auto& [name, t] : trainer.opt.v)
        append_tensor(tensors, payload, "adam_v", name, t, false);

    json manifest;
    manifest["config"] = json::parse(config.to_json_string());
    manifest["stage"] = stage;
    manifest["step"] = trainer.step;
    manifest["adam_step"] = trainer.opt.step;
    manifest["rng"] = {{"data", rng_to_json(trainer.data_rng)},
                       {"init", rng_to_json(trainer.init_rng)},
                       {"branch", rng_to_json(trainer.branch_rng)},
                       {"droppath", rng_to_json(trainer.droppath_rng)},
                       {"mask", rng_to_json(trainer.mask_rng)}};
    manifest["tensors"] = tensors;
    manifest["payload_nbytes"] = payload.size() * sizeof(float);
    manifest["payload_crc32"] =
        crc32(reinterpret_cast<const uint8_t*>(payload.data()), payload.size() * sizeof(float));
    const std::string mtext = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u64(out, mtext.size());
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw IoError("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError(path + ": bad magic (not a SLOTCKPT file)");
    const uint32_t version = get_u32(in, path);
    if (version != kVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    const uint64_t mlen = get_u64(in, path);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw IoError(path + ": truncated manifest");
    json manifest;
    try {
        manifest = json::parse(mtext);
    } catch (const json::exception& e) {
        throw IoError(path + ": corrupt manifest: " + e.what());
    }

    const uint64_t nbytes = manifest.at("payload_nbytes").get<uint64_t>();
    std::vector<uint8_t> payload(nbytes);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(nbytes));
    if (static_cast<uint64_t>(in.gcount()) != nbytes) throw IoError(path + ": truncated payload");
    const uint32_t want_crc = manifest.at("payload_crc32").get<uint32_t>();
    const uint32_t got_crc = crc32(payload.data(), payload.size());
    if (want_crc != got_crc)
        throw IoError(path + ": payload checksum mismatch (corrupt checkpoint)");

    Checkpoint ckpt;
    ckpt.config = config_from_json(manifest.at("config").dump());
    ckpt.stage = manifest.at("stage").get<std::string>();
    ckpt.model.dims = ckpt.config.model_dims();
    ckpt.trainer.step = manifest.at("step").get<int64_t>();
    ckpt.trainer.opt.step = manifest.at("adam_step").get<int64_t>();
    ckpt.trainer.data_rng = rng_from_json(manifest.at("rng").at("data"));
    ckpt.trainer.init_rng = rng_from_json(manifest.at("rng").at("init"));
    ckpt.trainer.branch_rng = rng_from_json(manifest.at("rng").at("branch"));
    ckpt.trainer.droppath_rng = rng_from_json(manifest.at("rng").at("droppath"));
    ckpt.trainer.mask_rng = rng_from_json(manifest.at("rng").at("mask"));

    for (const auto& entry : manifest.at("tensors")) {
        const std::string kind = entry.at("kind").get<std::string>();
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<size_t>>();
        const uint64_t offset = entry.at("offset").get<uint64_t>();
        if (entry.at("dtype").get<std::string>() != "f32")
            throw IoError(path + ": unsupported dtype for tensor " + name);
        Tensor<float> t;
        t.shape = shape;
        const size_t n = Tensor<float>::count(shape);
        if (offset + n * sizeof(float) > nbytes)
            throw IoError(path + ": tensor " + name + " extends past payload end");
        t.data.resize(n);
        std::memcpy(t.data.data(), payload.data() + offset, n * sizeof(float));
        if (kind == "param")
            ckpt.model.params.add(name, std::move(t), entry.at("trainable").get<bool>());
        else if (kind == "adam_m")
            ckpt.trainer.opt.m[name] = std::move(t);
        else if (kind == "adam_v")
            ckpt.trainer.opt.v[name] = std::move(t);
        else
            throw IoError(path + ": unknown tensor kind " + kind);
    }
    return ckpt;
}

}  // namespace slotforge
