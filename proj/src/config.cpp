#include "slotforge/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

using json = nlohmann::json;

namespace slotforge {

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "': type mismatch");
    }
}

json config_to_json(const RunConfig& c) {
    json j;
    j["H"] = c.H;
    j["W"] = c.W;
    j["C"] = c.C;
    j["P"] = c.P;
    j["T"] = c.T;
    j["num_sprites"] = c.num_sprites;
    j["shapes"] = c.shapes;
    j["background"] = c.background;
    j["entry_exit"] = c.entry_exit;
    j["min_radius"] = c.min_radius;
    j["max_radius"] = c.max_radius;
    j["min_speed"] = c.min_speed;
    j["max_speed"] = c.max_speed;
    j["K"] = c.K;
    j["d_slot"] = c.d_slot;
    j["D_feature"] = c.D_feature;
    j["sa_iters"] = c.sa_iters;
    j["sa_hidden"] = c.sa_hidden;
    j["dec_hidden"] = c.dec_hidden;
    j["dtst_layers"] = c.dtst_layers;
    j["dtst_heads"] = c.dtst_heads;
    j["dtst_ff_mult"] = c.dtst_ff_mult;
    j["T_max"] = c.T_max;
    j["theta"] = c.theta;
    j["merge_eps"] = c.merge_eps;
    j["lr"] = c.lr;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["steps"] = c.steps;
    j["batch"] = c.batch;
    j["seed"] = c.seed;
    j["p_b"] = c.p_b;
    j["p_d"] = c.p_d;
    j["mask_ratio"] = c.mask_ratio;
    j["use_dtst"] = c.use_dtst;
    j["use_merger"] = c.use_merger;
    j["use_xslot"] = c.use_xslot;
    return j;
}

RunConfig config_from(const json& j) {
    static const std::set<std::string> known = {
        "H", "W", "C", "P", "T", "num_sprites", "shapes", "background", "entry_exit",
        "min_radius", "max_radius", "min_speed", "max_speed", "K", "d_slot", "D_feature",
        "sa_iters", "sa_hidden", "dec_hidden", "dtst_layers", "dtst_heads", "dtst_ff_mult",
        "T_max", "theta", "merge_eps", "lr", "adam_beta1", "adam_beta2", "adam_eps", "steps",
        "batch", "seed", "p_b", "p_d", "mask_ratio", "use_dtst", "use_merger", "use_xslot"};
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

    RunConfig c;
    read_field(j, "H", c.H);
    read_field(j, "W", c.W);
    read_field(j, "C", c.C);
    read_field(j, "P", c.P);
    read_field(j, "T", c.T);
    read_field(j, "num_sprites", c.num_sprites);
    read_field(j, "shapes", c.shapes);
    read_field(j, "background", c.background);
    read_field(j, "entry_exit", c.entry_exit);
    read_field(j, "min_radius", c.min_radius);
    read_field(j, "max_radius", c.max_radius);
    read_field(j, "min_speed", c.min_speed);
    read_field(j, "max_speed", c.max_speed);
    read_field(j, "K", c.K);
    read_field(j, "d_slot", c.d_slot);
    read_field(j, "D_feature", c.D_feature);
    read_field(j, "sa_iters", c.sa_iters);
    read_field(j, "sa_hidden", c.sa_hidden);
    read_field(j, "dec_hidden", c.dec_hidden);
    read_field(j, "dtst_layers", c.dtst_layers);
    read_field(j, "dtst_heads", c.dtst_heads);
    read_field(j, "dtst_ff_mult", c.dtst_ff_mult);
    read_field(j, "T_max", c.T_max);
    read_field(j, "theta", c.theta);
    read_field(j, "merge_eps", c.merge_eps);
    read_field(j, "lr", c.lr);
    read_field(j, "adam_beta1", c.adam_beta1);
    read_field(j, "adam_beta2", c.adam_beta2);
    read_field(j, "adam_eps", c.adam_eps);
    read_field(j, "steps", c.steps);
    read_field(j, "batch", c.batch);
    read_field(j, "seed", c.seed);
    read_field(j, "p_b", c.p_b);
    read_field(j, "p_d", c.p_d);
    read_field(j, "mask_ratio", c.mask_ratio);
    read_field(j, "use_dtst", c.use_dtst);
    read_field(j, "use_merger", c.use_merger);
    read_field(j, "use_xslot", c.use_xslot);
    c.validate();
    return c;
}

void check(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace

void RunConfig::validate() const {
    check(H == W && (H == 32 || H == 64), "H/W: canvas must be square, 32 or 64");
    check(C == 3, "C: must be 3");
    check(P >= 1 && H % P == 0, "P: H must be divisible by P");
    check(T >= 1, "T: must be >= 1");
    check(T + 1 <= T_max, "T: buffer window plus one predicted frame must fit in T_max");
    check(num_sprites <= 4, "num_sprites: must be 0..4");
    for (const auto& s : shapes)
        check(s == "circle" || s == "square" || s == "triangle", "shapes: unknown shape " + s);
    check(num_sprites == 0 || !shapes.empty(), "shapes: must not be empty");
    check(background == "solid" || background == "two_tone",
          "background: must be 'solid' or 'two_tone'");
    check(min_radius >= 1 && max_radius >= min_radius, "radius range invalid");
    check(2.0 * max_radius + 1.0 <= static_cast<double>(H), "max_radius: sprite larger than canvas");
    check(min_speed >= 0 && max_speed >= min_speed, "speed range invalid");
    check(K >= 1, "K: must be >= 1");
    check(d_slot >= 1 && D_feature >= 1, "d_slot/D_feature: must be >= 1");
    check(sa_hidden >= 1 && dec_hidden >= 1, "hidden widths must be >= 1");
    check(dtst_heads >= 1 && d_slot % dtst_heads == 0,
          "dtst_heads: d_slot must be divisible by heads");
    check(dtst_ff_mult >= 1, "dtst_ff_mult: must be >= 1");
    check(T_max >= 2 && T_max <= 64, "T_max: must be in [2,64]");
    check(theta >= -1.0 && theta <= 1.0, "theta: must lie in [-1,1]");
    check(merge_eps > 0, "merge_eps: must be positive");
    check(lr > 0, "lr: must be positive");
    check(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
          "adam betas must lie in [0,1)");
    check(adam_eps > 0, "adam_eps: must be positive");
    check(steps >= 1, "steps: must be >= 1");
    check(batch >= 1, "batch: must be >= 1");
    check(p_b >= 0 && p_b <= 1, "p_b: must lie in [0,1]");
    check(p_d >= 0 && p_d <= 1, "p_d: must lie in [0,1]");
    check(mask_ratio >= 0 && mask_ratio <= 1, "mask_ratio: must lie in [0,1]");
    check(!use_xslot || use_dtst, "use_xslot requires use_dtst");
}

std::string RunConfig::to_json_string() const { return config_to_json(*this).dump(); }

GenConfig RunConfig::gen_config() const {
    GenConfig g;
    g.H = H;
    g.W = W;
    g.C = C;
    g.T = T;
    g.num_sprites = num_sprites;
    g.shapes = shapes;
    g.background = background;
    g.entry_exit = entry_exit;
    g.min_radius = min_radius;
    g.max_radius = max_radius;
    g.min_speed = min_speed;
    g.max_speed = max_speed;
    return g;
}

ModelDims RunConfig::model_dims() const {
    ModelDims d;
    d.D_feature = D_feature;
    d.d_slot = d_slot;
    d.K = K;
    d.N = (H / P) * (W / P);
    d.sa_iters = sa_iters;
    d.sa_hidden = sa_hidden;
    d.dec_hidden = dec_hidden;
    d.dtst_layers = dtst_layers;
    d.dtst_heads = dtst_heads;
    d.dtst_ff = dtst_ff_mult * d_slot;
    d.T_max = T_max;
    return d;
}

TrainConfig RunConfig::train_config(TrainConfig::Stage stage) const {
    TrainConfig t;
    t.stage = stage;
    t.bypass_prob = p_b;
    t.merger_drop_prob = p_d;
    t.mask_ratio = mask_ratio;
    t.merger.theta = theta;
    t.merger.eps = merge_eps;
    t.lr = lr;
    t.beta1 = adam_beta1;
    t.beta2 = adam_beta2;
    t.adam_eps = adam_eps;
    t.steps = steps;
    t.batch = batch;
    t.T = T;
    t.seed = seed;
    t.use_dtst = use_dtst;
    t.use_merger = use_merger;
    t.use_xslot = use_xslot;
    return t;
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        const auto first = text.find_first_not_of(" \t\r\n");
        if (first != std::string::npos) {  // empty file means all defaults
            try {
                j = json::parse(text);
            } catch (const json::exception& e) {
                throw ConfigError(path + ": invalid JSON: " + e.what());
            }
        }
    }
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kv + "' must have the form key=value");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception&) {
            parsed = value;  // bare strings are allowed
        }
        j[key] = parsed;
    }
    return config_from(j);
}

RunConfig config_from_json(const std::string& json_text) {
    try {
        return config_from(json::parse(json_text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config echo: invalid JSON: ") + e.what());
    }
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides) {
    if (overrides.empty()) return base;
    json j = config_to_json(base);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kv + "' must have the form key=value");
        json parsed;
        try {
            parsed = json::parse(kv.substr(eq + 1));
        } catch (const json::exception&) {
            parsed = kv.substr(eq + 1);
        }
        j[kv.substr(0, eq)] = parsed;
    }
    return config_from(j);
}

}  // namespace slotforge
