#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tgocr/tensor.hpp"

namespace tgocr {

// Decoded 32x32 bitmap, RGB triples in top-to-bottom row-major order.
struct RawImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb; // 3 bytes per pixel
};

// Decodes an uncompressed 24-bit Windows bitmap of exactly 32x32 pixels.
// Bottom-up and top-down files both come out in top-to-bottom row order.
// `name` is prepended to error messages when given.
RawImage decode_bitmap(std::span<const std::uint8_t> bytes, const std::string& name = {});

// Reads and decodes one bitmap file; errors carry the path.
RawImage load_bitmap(const std::filesystem::path& path);

// Grayscale (BT.601 luma, rounded) -> invert -> scale to [0, 1]. Ink becomes
// bright, paper becomes zero.
Tensor<float> preprocess(const RawImage& raw);

// One-hot target vector over the ten digit classes.
Tensor<float> one_hot(int label);

struct Sample {
    Tensor<float> image; // (1, 32, 32), values in [0, 1]
    int label = 0;       // 0..9
};

struct SplitDataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::array<int, 10> train_per_class{};
    std::array<int, 10> test_per_class{};
};

// Loads every *.bmp below `root` and produces the deterministic stratified
// split: filenames sorted lexicographically within each class, the first
// two thirds to train, the rest to test. Two directory layouts are
// supported: <root>/<class 0..9>/*.bmp, or flat <root>/*.bmp with the
// numeric label before the first underscore of the filename. Unexpected
// per-class counts produce a warning on stderr and a proportional split.
SplitDataset load_dataset(const std::filesystem::path& root);

struct Batch {
    Tensor<float> images;  // (B, 1, 32, 32)
    Tensor<float> targets; // (B, 10) one-hot rows
    std::vector<int> labels;
};

// Shuffles the samples with a seeded permutation and chops them into
// batches; the final partial batch is included.
std::vector<Batch> make_batches(const std::vector<Sample>& samples, index_t batch_size,
                                std::uint64_t epoch_seed);

} // namespace tgocr
