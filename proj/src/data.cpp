#include "tgocr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "tgocr/error.hpp"
#include "tgocr/parallel.hpp"
#include "tgocr/rng.hpp"

namespace tgocr {

namespace {

constexpr int kImageDim = 32;

std::uint32_t read_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::int32_t read_i32le(const std::uint8_t* p) {
    return static_cast<std::int32_t>(read_u32le(p));
}

std::uint16_t read_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

[[noreturn]] void decode_fail(const std::string& name, const std::string& what) {
    throw DecodeError(name.empty() ? what : name + ": " + what);
}

} // namespace

RawImage decode_bitmap(std::span<const std::uint8_t> bytes, const std::string& name) {
    // BITMAPFILEHEADER (14 bytes) + BITMAPINFOHEADER (40+ bytes)
    if (bytes.size() < 54) {
        decode_fail(name, "truncated bitmap header (" + std::to_string(bytes.size()) + " bytes)");
    }
    if (bytes[0] != 'B' || bytes[1] != 'M') {
        decode_fail(name, "not a BMP file (bad magic)");
    }
    const std::uint32_t pixel_offset = read_u32le(&bytes[10]);
    const std::uint32_t info_size = read_u32le(&bytes[14]);
    if (info_size < 40) {
        decode_fail(name, "unsupported BMP header variant (size " + std::to_string(info_size) + ")");
    }
    const std::int32_t width = read_i32le(&bytes[18]);
    const std::int32_t height = read_i32le(&bytes[22]); // negative means top-down
    const std::uint16_t planes = read_u16le(&bytes[26]);
    const std::uint16_t bpp = read_u16le(&bytes[28]);
    const std::uint32_t compression = read_u32le(&bytes[30]);

    if (planes != 1) {
        decode_fail(name, "unsupported plane count " + std::to_string(planes));
    }
    if (compression != 0) {
        decode_fail(name, "compressed BMP files are unsupported (compression " +
                              std::to_string(compression) + ")");
    }
    if (bpp != 24) {
        decode_fail(name, "only 24-bit BMP files are supported, got " + std::to_string(bpp) +
                              "-bit");
    }
    const bool top_down = height < 0;
    const std::int64_t abs_height = top_down ? -static_cast<std::int64_t>(height) : height;
    if (width != kImageDim || abs_height != kImageDim) {
        decode_fail(name, "expected a 32x32 image, got " + std::to_string(width) + "x" +
                              std::to_string(abs_height));
    }

    const std::size_t stride = (static_cast<std::size_t>(width) * 3 + 3) & ~std::size_t{3};
    if (pixel_offset < 54 || pixel_offset > bytes.size() ||
        bytes.size() - pixel_offset < stride * kImageDim) {
        decode_fail(name, "pixel data truncated");
    }

    RawImage img;
    img.width = kImageDim;
    img.height = kImageDim;
    img.rgb.resize(static_cast<std::size_t>(kImageDim) * kImageDim * 3);
    for (int row = 0; row < kImageDim; ++row) {
        const int file_row = top_down ? row : kImageDim - 1 - row;
        const std::uint8_t* src = bytes.data() + pixel_offset + file_row * stride;
        std::uint8_t* dst = img.rgb.data() + static_cast<std::size_t>(row) * kImageDim * 3;
        for (int x = 0; x < kImageDim; ++x) {
            dst[x * 3 + 0] = src[x * 3 + 2]; // BMP stores BGR
            dst[x * 3 + 1] = src[x * 3 + 1];
            dst[x * 3 + 2] = src[x * 3 + 0];
        }
    }
    return img;
}

RawImage load_bitmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open image file " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_bitmap(bytes, path.string());
}

Tensor<float> preprocess(const RawImage& raw) {
    Tensor<float> out(Shape{1, kImageDim, kImageDim});
    for (index_t i = 0; i < static_cast<index_t>(kImageDim) * kImageDim; ++i) {
        const double r = raw.rgb[static_cast<std::size_t>(i) * 3 + 0];
        const double g = raw.rgb[static_cast<std::size_t>(i) * 3 + 1];
        const double b = raw.rgb[static_cast<std::size_t>(i) * 3 + 2];
        const long gray = std::lround(0.299 * r + 0.587 * g + 0.114 * b);
        const long inverted = 255 - gray;
        out(i) = static_cast<float>(inverted) / 255.0f;
    }
    return out;
}

Tensor<float> one_hot(int label) {
    if (label < 0 || label > 9) {
        throw DataError("class label out of range 0..9: " + std::to_string(label));
    }
    Tensor<float> t(Shape{10});
    t(label) = 1.0f;
    return t;
}

namespace {

struct LabeledPath {
    std::filesystem::path path;
    int label;
};

bool has_bmp_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".bmp";
}

// <root>/<digit>/*.bmp
std::vector<std::vector<LabeledPath>> scan_class_directories(const std::filesystem::path& root) {
    std::vector<std::vector<LabeledPath>> per_class(10);
    bool found_any_dir = false;
    for (int label = 0; label <= 9; ++label) {
        const std::filesystem::path dir = root / std::to_string(label);
        if (!std::filesystem::is_directory(dir)) {
            continue;
        }
        found_any_dir = true;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file() && has_bmp_extension(entry.path())) {
                per_class[label].push_back({entry.path(), label});
            }
        }
    }
    if (!found_any_dir) {
        per_class.clear();
    }
    return per_class;
}

// <root>/<digit>_<anything>.bmp
std::vector<std::vector<LabeledPath>> scan_flat_directory(const std::filesystem::path& root) {
    std::vector<std::vector<LabeledPath>> per_class(10);
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (!entry.is_regular_file() || !has_bmp_extension(entry.path())) {
            continue;
        }
        const std::string stem = entry.path().stem().string();
        const std::size_t underscore = stem.find('_');
        int label = -1;
        if (underscore != std::string::npos && underscore > 0 && underscore <= 2) {
            const std::string prefix = stem.substr(0, underscore);
            if (std::all_of(prefix.begin(), prefix.end(),
                            [](unsigned char c) { return std::isdigit(c); })) {
                label = std::stoi(prefix);
            }
        }
        if (label < 0 || label > 9) {
            std::cerr << "warning: skipping " << entry.path().string()
                      << " (no class label before the first underscore)\n";
            continue;
        }
        per_class[label].push_back({entry.path(), label});
    }
    return per_class;
}

} // namespace

SplitDataset load_dataset(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) {
        throw DataError("dataset root is not a directory: " + root.string());
    }

    auto per_class = scan_class_directories(root);
    if (per_class.empty()) {
        per_class = scan_flat_directory(root);
    }

    std::size_t total = 0;
    for (auto& files : per_class) {
        std::sort(files.begin(), files.end(),
                  [](const LabeledPath& a, const LabeledPath& b) {
                      return a.path.filename().string() < b.path.filename().string();
                  });
        total += files.size();
    }
    if (total == 0) {
        throw DataError("no .bmp files found under " + root.string());
    }

    for (int label = 0; label <= 9; ++label) {
        if (per_class[label].size() != 300) {
            std::cerr << "warning: class " << label << " has " << per_class[label].size()
                      << " files (expected 300); splitting proportionally\n";
        }
    }

    // first two thirds of each class (rounded to nearest) to train
    SplitDataset ds;
    std::vector<LabeledPath> ordered;
    std::vector<bool> goes_to_train;
    for (int label = 0; label <= 9; ++label) {
        const std::size_t n = per_class[label].size();
        const std::size_t n_train = (2 * n + 1) / 3;
        for (std::size_t i = 0; i < n; ++i) {
            ordered.push_back(per_class[label][i]);
            goes_to_train.push_back(i < n_train);
        }
    }

    // decode in parallel, then assemble in the deterministic file order
    std::vector<Sample> decoded(ordered.size());
    std::vector<std::string> failures(ordered.size());
    parallel_for(static_cast<index_t>(ordered.size()), 8, [&](index_t b, index_t e) {
        for (index_t i = b; i < e; ++i) {
            try {
                decoded[i] = Sample{preprocess(load_bitmap(ordered[i].path)), ordered[i].label};
            } catch (const Error& err) {
                failures[i] = err.what();
            }
        }
    });
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (!failures[i].empty()) {
            throw DataError("failed to load " + ordered[i].path.string() + ": " + failures[i]);
        }
    }

    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (goes_to_train[i]) {
            ds.train.push_back(std::move(decoded[i]));
            ds.train_per_class[ordered[i].label]++;
        } else {
            ds.test.push_back(std::move(decoded[i]));
            ds.test_per_class[ordered[i].label]++;
        }
    }
    return ds;
}

std::vector<Batch> make_batches(const std::vector<Sample>& samples, index_t batch_size,
                                std::uint64_t epoch_seed) {
    if (batch_size < 1) {
        throw ConfigError("batch size must be >= 1, got " + std::to_string(batch_size));
    }
    const auto order = shuffled_indices(samples.size(), epoch_seed);
    std::vector<Batch> batches;
    const index_t n = static_cast<index_t>(samples.size());
    for (index_t start = 0; start < n; start += batch_size) {
        const index_t b = std::min(batch_size, n - start);
        Batch batch;
        batch.images = Tensor<float>(Shape{b, 1, kImageDim, kImageDim});
        batch.targets = Tensor<float>(Shape{b, 10});
        batch.labels.resize(static_cast<std::size_t>(b));
        for (index_t i = 0; i < b; ++i) {
            const Sample& s = samples[order[static_cast<std::size_t>(start + i)]];
            std::memcpy(batch.images.data() + i * kImageDim * kImageDim, s.image.data(),
                        sizeof(float) * kImageDim * kImageDim);
            batch.targets(i, s.label) = 1.0f;
            batch.labels[static_cast<std::size_t>(i)] = s.label;
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

} // namespace tgocr
