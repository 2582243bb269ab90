#pragma once

// Helpers for building bitmap fixtures and synthetic labeled datasets on
// disk. The synthetic images are deterministic stroke patterns per class
// with per-sample jitter, so models can actually separate the classes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace tgocr::testing {

using Pixel = std::array<std::uint8_t, 3>; // RGB

// 32x32 RGB pixel grid, row-major, top-to-bottom.
using PixelGrid = std::vector<Pixel>;

PixelGrid solid_image(Pixel color);

// Serializes a 32x32 grid as an uncompressed 24-bit bottom-up BMP.
std::vector<std::uint8_t> encode_bmp(const PixelGrid& pixels);

// Variant with a top-down row order (negative height), for decoder tests.
std::vector<std::uint8_t> encode_bmp_topdown(const PixelGrid& pixels);

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Deterministic dark-strokes-on-white image for the given class and sample.
PixelGrid synthetic_digit(int label, std::uint64_t seed, int sample_index);

// Writes <root>/<class>/img_<n>.bmp for every class 0..9.
void write_synthetic_dataset(const std::filesystem::path& root, int per_class,
                             std::uint64_t seed);

// Fresh directory under the system temp dir; removes any previous content.
std::filesystem::path fresh_temp_dir(const std::string& name);

} // namespace tgocr::testing
