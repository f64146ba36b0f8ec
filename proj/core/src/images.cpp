#include "hns/images.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace hns {

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::vector<std::uint8_t> to_bytes(std::span<const float> planar, std::size_t channels, std::size_t height,
                                   std::size_t width) {
    const std::size_t P = height * width;
    if (planar.size() != channels * P) throw std::invalid_argument("to_bytes: size does not match C*H*W");
    std::vector<std::uint8_t> out(planar.size());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < P; ++p) out[p * channels + c] = to_byte(planar[c * P + p]);
    }
    return out;
}

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, std::size_t width, std::size_t height,
               std::size_t channels, std::span<const std::uint8_t> pixels) {
    if (pixels.size() != width * height * channels) {
        throw std::invalid_argument("image buffer has " + std::to_string(pixels.size()) + " bytes, expected " +
                                    std::to_string(width * height * channels));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << magic << '\n' << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels) {
    write_pnm(path, "P5", width, height, 1, pixels);
}

void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb) {
    write_pnm(path, "P6", width, height, 3, rgb);
}

RawImage read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string magic;
    RawImage img;
    int maxval = 0;
    in >> magic >> img.width >> img.height >> maxval;
    if (!in || (magic != "P5" && magic != "P6") || maxval != 255) {
        throw std::runtime_error(path.string() + " is not a binary 8-bit PGM/PPM");
    }
    in.get();
    img.channels = magic == "P5" ? 1 : 3;
    img.pixels.resize(img.width * img.height * img.channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw std::runtime_error(path.string() + " is truncated");
    }
    return img;
}

}  // namespace hns
