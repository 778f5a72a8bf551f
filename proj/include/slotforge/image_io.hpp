#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slotforge {

// 8-bit interleaved RGB.
struct ImageU8 {
    size_t H = 0, W = 0, C = 1;
    std::vector<uint8_t> px;

    uint8_t& at(size_t r, size_t c, size_t ch = 0) { return px[(r * W + c) * C + ch]; }
    uint8_t at(size_t r, size_t c, size_t ch = 0) const { return px[(r * W + c) * C + ch]; }
};

void write_ppm(const std::string& path, const ImageU8& img);   // P6, C=3
void write_pgm(const std::string& path, const ImageU8& img);   // P5, C=1
ImageU8 read_ppm(const std::string& path);
ImageU8 read_pgm(const std::string& path);

void write_png_rgb(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);  // returns C=3 or C=1

// Dispatch on extension (.ppm/.pgm/.png); IoError names the file otherwise.
ImageU8 read_image(const std::string& path);

}  // namespace slotforge
