#include "tgocr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tgocr/error.hpp"

namespace tgocr {

std::string metrics_csv_row(const EpochMetrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f", m.epoch, m.train_loss, m.train_acc,
                  m.test_acc, m.seconds);
    return buf;
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open metrics file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": line 1: missing header");
    }
    if (line != kMetricsCsvHeader) {
        throw DataError(path.string() + ": line 1: expected header \"" +
                        std::string(kMetricsCsvHeader) + "\"");
    }

    std::vector<EpochMetrics> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::array<double, 5> fields{};
        std::stringstream ss(line);
        std::string cell;
        std::size_t idx = 0;
        while (std::getline(ss, cell, ',')) {
            if (idx >= fields.size()) {
                break;
            }
            try {
                std::size_t used = 0;
                fields[idx] = std::stod(cell, &used);
                if (used != cell.size()) {
                    throw std::invalid_argument(cell);
                }
            } catch (const std::exception&) {
                throw DataError(path.string() + ": line " + std::to_string(line_no) +
                                ": bad numeric field \"" + cell + "\"");
            }
            ++idx;
        }
        if (idx != fields.size()) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                            std::to_string(fields.size()) + " fields");
        }
        rows.push_back({static_cast<int>(fields[0]), fields[1], fields[2], fields[3], fields[4]});
    }
    if (rows.empty()) {
        throw DataError(path.string() + ": no data rows after the header");
    }
    return rows;
}

namespace {

constexpr double kWidth = 880;
constexpr double kHeight = 500;
constexpr double kLeft = 80;
constexpr double kRight = 800;
constexpr double kTop = 50;
constexpr double kBottom = 440;

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2g", v);
    return buf;
}

} // namespace

std::string render_metrics_svg(const std::vector<EpochMetrics>& metrics) {
    const int first_epoch = metrics.front().epoch;
    const int last_epoch = metrics.back().epoch;
    const double epoch_span = std::max(1, last_epoch - first_epoch);
    double max_loss = 0.0;
    for (const auto& m : metrics) {
        max_loss = std::max(max_loss, m.train_loss);
    }
    if (max_loss <= 0.0) {
        max_loss = 1.0;
    }
    max_loss *= 1.05;

    auto x_of = [&](double epoch) {
        return kLeft + (epoch - first_epoch) / epoch_span * (kRight - kLeft);
    };
    auto y_of_loss = [&](double loss) { return kBottom - loss / max_loss * (kBottom - kTop); };
    auto y_of_acc = [&](double acc) { return kBottom - acc * (kBottom - kTop); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kWidth << " " << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
    svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << (kWidth / 2) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"17\">"
        << "training loss and test accuracy</text>\n";

    // axes
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
        << kBottom << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kRight << "\" y1=\"" << kTop << "\" x2=\"" << kRight << "\" y2=\""
        << kBottom << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\""
        << kBottom << "\" stroke=\"black\"/>\n";

    // ticks: four per axis
    for (int t = 0; t <= 4; ++t) {
        const double frac = t / 4.0;
        const double y = kBottom - frac * (kBottom - kTop);
        svg << "<line x1=\"" << (kLeft - 5) << "\" y1=\"" << fmt(y) << "\" x2=\"" << kLeft
            << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << (kLeft - 9) << "\" y=\"" << fmt(y + 4)
            << "\" text-anchor=\"end\" fill=\"#c0392b\">" << fmt_tick(frac * max_loss)
            << "</text>\n";
        svg << "<line x1=\"" << kRight << "\" y1=\"" << fmt(y) << "\" x2=\"" << (kRight + 5)
            << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << (kRight + 9) << "\" y=\"" << fmt(y + 4)
            << "\" text-anchor=\"start\" fill=\"#2471a3\">" << fmt_tick(frac) << "</text>\n";

        const double x = kLeft + frac * (kRight - kLeft);
        const double epoch = first_epoch + frac * epoch_span;
        svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << kBottom << "\" x2=\"" << fmt(x)
            << "\" y2=\"" << (kBottom + 5) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt(x) << "\" y=\"" << (kBottom + 22)
            << "\" text-anchor=\"middle\">" << static_cast<int>(std::lround(epoch)) << "</text>\n";
    }

    svg << "<text x=\"" << (kWidth / 2) << "\" y=\"" << (kHeight - 18)
        << "\" text-anchor=\"middle\">epoch</text>\n";
    svg << "<text x=\"" << (kLeft + 10) << "\" y=\"" << (kTop - 8)
        << "\" fill=\"#c0392b\">train_loss</text>\n";
    svg << "<text x=\"" << (kRight - 10) << "\" y=\"" << (kTop - 8)
        << "\" text-anchor=\"end\" fill=\"#2471a3\">test_acc</text>\n";

    svg << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"";
    for (const auto& m : metrics) {
        svg << fmt(x_of(m.epoch)) << "," << fmt(y_of_loss(m.train_loss)) << " ";
    }
    svg << "\"/>\n";

    svg << "<polyline fill=\"none\" stroke=\"#2471a3\" stroke-width=\"1.5\" points=\"";
    for (const auto& m : metrics) {
        svg << fmt(x_of(m.epoch)) << "," << fmt(y_of_acc(m.test_acc)) << " ";
    }
    svg << "\"/>\n";

    svg << "</svg>\n";
    return svg.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open file for writing: " + tmp.string());
        }
        out << content;
        if (!out) {
            throw IoError("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("failed to move " + tmp.string() + " into place: " + ec.message());
    }
}

} // namespace tgocr
