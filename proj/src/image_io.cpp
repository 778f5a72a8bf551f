#include "slotforge/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "slotforge/common.hpp"

namespace slotforge {

namespace {

void skip_pnm_space(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

ImageU8 read_pnm(const std::string& path, const char* magic, size_t channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string m(2, '\0');
    in.read(m.data(), 2);
    if (m != magic) throw IoError(path + ": bad magic, expected " + magic);
    size_t w = 0, h = 0, maxv = 0;
    skip_pnm_space(in);
    in >> w;
    skip_pnm_space(in);
    in >> h;
    skip_pnm_space(in);
    in >> maxv;
    if (!in || w == 0 || h == 0 || maxv != 255) throw IoError(path + ": bad PNM header");
    in.get();  // single whitespace after maxval
    ImageU8 img;
    img.H = h;
    img.W = w;
    img.C = channels;
    img.px.resize(h * w * channels);
    in.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
    if (static_cast<size_t>(in.gcount()) != img.px.size())
        throw IoError(path + ": truncated pixel data");
    return img;
}

void write_pnm(const std::string& path, const ImageU8& img, const char* magic, size_t channels) {
    require(img.C == channels, "write_pnm: wrong channel count");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << magic << "\n" << img.W << " " << img.H << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.px.data()),
              static_cast<std::streamsize>(img.px.size()));
    if (!out) throw IoError("short write to " + path);
}

struct PngReadCloser {
    png_structp p = nullptr;
    png_infop i = nullptr;
    FILE* f = nullptr;
    ~PngReadCloser() {
        if (p) png_destroy_read_struct(&p, i ? &i : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};

struct PngWriteCloser {
    png_structp p = nullptr;
    png_infop i = nullptr;
    FILE* f = nullptr;
    ~PngWriteCloser() {
        if (p) png_destroy_write_struct(&p, i ? &i : nullptr);
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_ppm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P6", 3); }
void write_pgm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P5", 1); }
ImageU8 read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }
ImageU8 read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }

void write_png_rgb(const std::string& path, const ImageU8& img) {
    require(img.C == 3, "write_png_rgb: expects 3 channels");
    PngWriteCloser s;
    s.f = std::fopen(path.c_str(), "wb");
    if (!s.f) throw IoError("cannot write " + path);
    s.p = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    s.i = png_create_info_struct(s.p);
    if (!s.p || !s.i || setjmp(png_jmpbuf(s.p))) throw IoError("png write failed: " + path);
    png_init_io(s.p, s.f);
    png_set_IHDR(s.p, s.i, static_cast<png_uint_32>(img.W), static_cast<png_uint_32>(img.H), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(s.p, s.i);
    std::vector<png_bytep> rows(img.H);
    for (size_t r = 0; r < img.H; ++r)
        rows[r] = const_cast<png_bytep>(img.px.data() + r * img.W * 3);
    png_write_image(s.p, rows.data());
    png_write_end(s.p, nullptr);
}

ImageU8 read_png(const std::string& path) {
    PngReadCloser s;
    s.f = std::fopen(path.c_str(), "rb");
    if (!s.f) throw IoError("cannot open " + path);
    s.p = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    s.i = png_create_info_struct(s.p);
    if (!s.p || !s.i || setjmp(png_jmpbuf(s.p))) throw IoError("png read failed: " + path);
    png_init_io(s.p, s.f);
    png_read_info(s.p, s.i);
    const png_uint_32 w = png_get_image_width(s.p, s.i);
    const png_uint_32 h = png_get_image_height(s.p, s.i);
    const png_byte color = png_get_color_type(s.p, s.i);
    const png_byte depth = png_get_bit_depth(s.p, s.i);
    if (depth == 16) png_set_strip_16(s.p);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(s.p);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(s.p);
    if (png_get_valid(s.p, s.i, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(s.p);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(s.p);
    png_read_update_info(s.p, s.i);
    const size_t channels = png_get_channels(s.p, s.i);
    if (channels != 1 && channels != 3) throw IoError(path + ": unsupported PNG channel count");
    ImageU8 img;
    img.H = h;
    img.W = w;
    img.C = channels;
    img.px.resize(static_cast<size_t>(h) * w * channels);
    std::vector<png_bytep> rows(h);
    for (size_t r = 0; r < h; ++r) rows[r] = img.px.data() + r * w * channels;
    png_read_image(s.p, rows.data());
    return img;
}

ImageU8 read_image(const std::string& path) {
    auto ends = [&](const char* e) {
        const std::string s(e);
        return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    if (ends(".ppm")) return read_ppm(path);
    if (ends(".pgm")) return read_pgm(path);
    if (ends(".png")) return read_png(path);
    throw IoError(path + ": unsupported image extension");
}

}  // namespace slotforge
