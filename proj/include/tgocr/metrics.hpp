#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tgocr {

struct EpochMetrics {
    int epoch = 0;         // 1-based
    double train_loss = 0; // mean over the epoch's training batches
    double train_acc = 0;
    double test_acc = 0;
    double seconds = 0; // wall clock; written as 0 in deterministic mode
};

inline constexpr const char* kMetricsCsvHeader = "epoch,train_loss,train_acc,test_acc,seconds";

// "epoch,<loss>,<acc>,<acc>,<seconds>" with six fractional digits, no newline.
std::string metrics_csv_row(const EpochMetrics& m);

// Parses a metrics CSV; DataError messages carry 1-based line numbers.
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

// Standalone SVG line chart: train_loss against the left axis, test_acc
// against the right axis (fixed to [0, 1]), epoch along x. Exactly one
// polyline per series.
std::string render_metrics_svg(const std::vector<EpochMetrics>& metrics);

// Writes via a temporary sibling plus rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace tgocr
