#include "slotforge/sprites.hpp"

#include <algorithm>
#include <cmath>

namespace slotforge {

namespace {

struct Rgb {
    uint8_t r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(std::fmod(h, 1.0) + 1.0, 1.0) * 6.0;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    double r = 0, g = 0, b = 0;
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    auto q8 = [](double x) { return static_cast<uint8_t>(std::lround(x * 255.0)); };
    return {q8(r), q8(g), q8(b)};
}

struct Sprite {
    int id;
    int shape;  // 0 circle, 1 square, 2 triangle
    double radius;
    Rgb color;
    double x, y, vx, vy;
    size_t enter = 0, exit = SIZE_MAX;  // visible when enter <= t < exit

    bool inside(double px, double py) const {
        const double dx = px - x, dy = py - y;
        switch (shape) {
            case 0: return dx * dx + dy * dy <= radius * radius;
            case 1: return std::abs(dx) <= radius && std::abs(dy) <= radius;
            default:  // upward triangle, apex at (x, y-r), base at y+r
                return dy >= -radius && dy <= radius && std::abs(dx) <= (dy + radius) * 0.5;
        }
    }
};

int shape_index(const std::string& name) {
    if (name == "circle") return 0;
    if (name == "square") return 1;
    if (name == "triangle") return 2;
    throw ConfigError("unknown sprite shape: " + name);
}

}  // namespace

SpriteVideo generate_sprite_video(const GenConfig& cfg, uint64_t seed) {
    if (cfg.H != cfg.W || (cfg.H != 32 && cfg.H != 64))
        throw ConfigError("canvas must be square with H=W in {32,64}");
    if (cfg.num_sprites > 4) throw ConfigError("sprite count must be 0..4");
    if (cfg.C != 3) throw ConfigError("generator renders 3-channel frames");
    if (cfg.T < 1) throw ConfigError("T must be >= 1");
    if (cfg.min_radius < 1 || cfg.max_radius < cfg.min_radius)
        throw ConfigError("bad radius range");
    if (2.0 * cfg.max_radius + 1.0 > static_cast<double>(cfg.H))
        throw ConfigError("sprite larger than canvas");
    if (cfg.num_sprites > 0 && cfg.shapes.empty())
        throw ConfigError("shape list must not be empty");

    Rng rng(seed, "sprite-video");

    // background first, then evenly spread sprite hues offset from it
    const double hue0 = rng.uniform01();
    const Rgb bg_a = hsv_to_rgb(hue0, 0.35, 0.25);
    const Rgb bg_b = hsv_to_rgb(hue0 + 0.07, 0.35, 0.35);
    const bool two_tone = cfg.background == "two_tone";

    std::vector<Sprite> sprites;
    for (size_t i = 0; i < cfg.num_sprites; ++i) {
        Sprite s;
        s.id = static_cast<int>(i) + 1;
        s.shape = shape_index(cfg.shapes[rng.below(cfg.shapes.size())]);
        s.radius = cfg.min_radius + rng.uniform01() * (cfg.max_radius - cfg.min_radius);
        const double hue = hue0 + 0.5 + static_cast<double>(i) / std::max<size_t>(cfg.num_sprites, 1) * 0.6 +
                           0.05 * rng.uniform01();
        s.color = hsv_to_rgb(hue, 0.85, 0.95);
        const double lo = s.radius, hi = static_cast<double>(cfg.W - 1) - s.radius;
        s.x = lo + rng.uniform01() * (hi - lo);
        s.y = lo + rng.uniform01() * (hi - lo);
        const double speed = cfg.min_speed + rng.uniform01() * (cfg.max_speed - cfg.min_speed);
        const double ang = rng.uniform01() * 2.0 * M_PI;
        s.vx = speed * std::cos(ang);
        s.vy = speed * std::sin(ang);
        if (cfg.entry_exit && cfg.T >= 3) {
            const uint64_t mode = rng.below(3);
            if (mode == 1) s.enter = 1 + rng.below(cfg.T - 1);
            else if (mode == 2) s.exit = 1 + rng.below(cfg.T - 1);
        }
        sprites.push_back(s);
    }

    SpriteVideo out;
    out.T = cfg.T;
    out.H = cfg.H;
    out.W = cfg.W;
    out.C = 3;
    out.frames.resize(cfg.T * cfg.H * cfg.W * 3);
    out.gt.resize(cfg.T);

    std::vector<int> owner(cfg.H * cfg.W);
    for (size_t t = 0; t < cfg.T; ++t) {
        std::fill(owner.begin(), owner.end(), 0);
        // background
        for (size_t r = 0; r < cfg.H; ++r) {
            const Rgb bg = (two_tone && r >= cfg.H / 2) ? bg_b : bg_a;
            for (size_t c = 0; c < cfg.W; ++c) {
                out.px(t, r, c, 0) = bg.r / 255.0f;
                out.px(t, r, c, 1) = bg.g / 255.0f;
                out.px(t, r, c, 2) = bg.b / 255.0f;
            }
        }
        // sprites, later ids on top
        for (const Sprite& s : sprites) {
            if (t < s.enter || t >= s.exit) continue;
            const int r0 = std::max(0, static_cast<int>(std::floor(s.y - s.radius)) - 1);
            const int r1 = std::min(static_cast<int>(cfg.H) - 1,
                                    static_cast<int>(std::ceil(s.y + s.radius)) + 1);
            const int c0 = std::max(0, static_cast<int>(std::floor(s.x - s.radius)) - 1);
            const int c1 = std::min(static_cast<int>(cfg.W) - 1,
                                    static_cast<int>(std::ceil(s.x + s.radius)) + 1);
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c)
                    if (s.inside(c, r)) {
                        owner[r * cfg.W + c] = s.id;
                        out.px(t, r, c, 0) = s.color.r / 255.0f;
                        out.px(t, r, c, 1) = s.color.g / 255.0f;
                        out.px(t, r, c, 2) = s.color.b / 255.0f;
                    }
        }
        // visible masks and tight boxes
        for (const Sprite& s : sprites) {
            if (t < s.enter || t >= s.exit) continue;
            BinaryMask m(cfg.H, cfg.W);
            int xmin = static_cast<int>(cfg.W), xmax = -1, ymin = static_cast<int>(cfg.H),
                ymax = -1;
            for (size_t r = 0; r < cfg.H; ++r)
                for (size_t c = 0; c < cfg.W; ++c)
                    if (owner[r * cfg.W + c] == s.id) {
                        m.at(r, c) = 1;
                        xmin = std::min(xmin, static_cast<int>(c));
                        xmax = std::max(xmax, static_cast<int>(c));
                        ymin = std::min(ymin, static_cast<int>(r));
                        ymax = std::max(ymax, static_cast<int>(r));
                    }
            if (xmax < 0) continue;  // fully occluded
            Instance inst;
            inst.id = s.id;
            inst.mask = std::move(m);
            inst.box = Box{xmin, ymin, xmax, ymax};
            out.gt[t].push_back(std::move(inst));
        }
        // advance with wall bounce
        for (Sprite& s : sprites) {
            s.x += s.vx;
            s.y += s.vy;
            const double lo = s.radius, hix = static_cast<double>(cfg.W - 1) - s.radius,
                         hiy = static_cast<double>(cfg.H - 1) - s.radius;
            if (s.x < lo) { s.x = 2 * lo - s.x; s.vx = -s.vx; }
            if (s.x > hix) { s.x = 2 * hix - s.x; s.vx = -s.vx; }
            if (s.y < lo) { s.y = 2 * lo - s.y; s.vy = -s.vy; }
            if (s.y > hiy) { s.y = 2 * hiy - s.y; s.vy = -s.vy; }
        }
    }
    return out;
}

}  // namespace slotforge
