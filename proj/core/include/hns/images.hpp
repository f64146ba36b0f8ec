#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hns {

/// [0,1] -> {0..255}, rounding to nearest and clamping.
std::uint8_t to_byte(float v);

/// Planar [C,H,W] float image to interleaved bytes (C = 1 or 3).
std::vector<std::uint8_t> to_bytes(std::span<const float> planar, std::size_t channels, std::size_t height,
                                   std::size_t width);

/// "P5\n<w> <h>\n255\n" followed by w*h bytes.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> pixels);

/// "P6\n<w> <h>\n255\n" followed by interleaved RGB bytes.
void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb);

struct RawImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;
};

/// Reads the binary PGM/PPM written above (maxval 255, no comments).
RawImage read_pnm(const std::filesystem::path& path);

}  // namespace hns
