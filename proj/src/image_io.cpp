#include "imle/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

namespace imle {

GrayImage GrayImage::from_f32(const std::vector<float>& data, int width, int height, float lo,
                              float hi) {
    if (static_cast<int>(data.size()) != width * height)
        throw std::runtime_error("GrayImage::from_f32: size mismatch");
    GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(data.size());
    float range = hi - lo;
    for (size_t i = 0; i < data.size(); ++i) {
        float v = (data[i] - lo) / range;
        img.pixels[i] = static_cast<uint8_t>(std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    }
    return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

GrayImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("read_pgm: not a P5 file: " + path);
    GrayImage img;
    int maxval = 0;
    in >> img.width >> img.height >> maxval;
    if (maxval != 255) throw std::runtime_error("read_pgm: only maxval 255 supported");
    in.get(); // single whitespace after header
    img.pixels.resize(static_cast<size_t>(img.width) * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<size_t>(in.gcount()) != img.pixels.size())
        throw std::runtime_error("read_pgm: truncated payload in " + path);
    return img;
}

namespace {

void png_chunk(std::ostream& out, const char type[4], const std::vector<uint8_t>& data) {
    auto be32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    be32(static_cast<uint32_t>(data.size()));
    out.write(type, 4);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    // zlib resets the crc when handed a null buffer, so skip empty payloads
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    be32(static_cast<uint32_t>(crc));
}

} // namespace

void write_png(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_png: cannot open " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr(13);
    auto put32 = [&](size_t at, uint32_t v) {
        ihdr[at] = static_cast<uint8_t>(v >> 24);
        ihdr[at + 1] = static_cast<uint8_t>(v >> 16);
        ihdr[at + 2] = static_cast<uint8_t>(v >> 8);
        ihdr[at + 3] = static_cast<uint8_t>(v);
    };
    put32(0, static_cast<uint32_t>(img.width));
    put32(4, static_cast<uint32_t>(img.height));
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 0;  // grayscale
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    png_chunk(out, "IHDR", ihdr);

    // filter byte 0 per scanline
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (img.width + 1));
    for (int r = 0; r < img.height; ++r) {
        raw.push_back(0);
        raw.insert(raw.end(), img.pixels.begin() + static_cast<size_t>(r) * img.width,
                   img.pixels.begin() + static_cast<size_t>(r + 1) * img.width);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    comp.resize(comp_len);
    png_chunk(out, "IDAT", comp);
    png_chunk(out, "IEND", {});
}

GrayImage tile_grid(const std::vector<GrayImage>& tiles, int columns) {
    if (tiles.empty()) throw std::runtime_error("tile_grid: no tiles");
    int tw = tiles[0].width, th = tiles[0].height;
    for (const auto& t : tiles)
        if (t.width != tw || t.height != th)
            throw std::runtime_error("tile_grid: tiles must share dimensions");
    int rows = (static_cast<int>(tiles.size()) + columns - 1) / columns;
    GrayImage grid;
    grid.width = columns * tw + (columns - 1);
    grid.height = rows * th + (rows - 1);
    grid.pixels.assign(static_cast<size_t>(grid.width) * grid.height, 64); // separator gray
    for (size_t i = 0; i < tiles.size(); ++i) {
        int gr = static_cast<int>(i) / columns, gc = static_cast<int>(i) % columns;
        int y0 = gr * (th + 1), x0 = gc * (tw + 1);
        for (int r = 0; r < th; ++r)
            std::copy(tiles[i].pixels.begin() + static_cast<size_t>(r) * tw,
                      tiles[i].pixels.begin() + static_cast<size_t>(r + 1) * tw,
                      grid.pixels.begin() + static_cast<size_t>(y0 + r) * grid.width + x0);
    }
    return grid;
}

std::string content_hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("content_hash_file: cannot open " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    std::ostringstream os;
    os << std::hex;
    for (int i = 15; i >= 0; --i) os << ((h >> (i * 4)) & 0xf);
    return os.str();
}

} // namespace imle
