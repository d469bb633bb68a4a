#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace imle {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels; // row-major

    static GrayImage from_f32(const std::vector<float>& data, int width, int height,
                              float lo = 0.0f, float hi = 1.0f);
};

void write_pgm(const GrayImage& img, const std::string& path);
GrayImage read_pgm(const std::string& path);

// Minimal 8-bit grayscale PNG (zlib-compressed, filter 0).
void write_png(const GrayImage& img, const std::string& path);

// Lays out equally sized tiles in a grid with 1px separators.
GrayImage tile_grid(const std::vector<GrayImage>& tiles, int columns);

// FNV-1a 64 over a file's bytes, hex-encoded; used for run manifests.
std::string content_hash_file(const std::string& path);

} // namespace imle
