#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "tgocr/metrics.hpp"

#include "../support/testdata.hpp"

using namespace tgocr;
using namespace tgocr::testing;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;
};

// Runs the binary through /bin/sh, capturing stdout (and stderr when merged).
CliResult run_cli(const std::string& args, bool merge_stderr = false,
                  const std::string& env_prefix = "") {
    std::string command = env_prefix.empty() ? "" : env_prefix + " ";
    command += std::string(TGOCR_CLI_PATH) + " " + args;
    command += merge_stderr ? " 2>&1" : " 2>/dev/null";

    CliResult result;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) {
        result.output.append(buf, n);
    }
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

int count_lines_matching(const std::string& text, const std::string& needle) {
    int count = 0;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.find(needle) != std::string::npos) {
            ++count;
        }
    }
    return count;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("usage errors exit 2 and help exits 0") {
    CHECK(run_cli("--help").exit_code == 0);
    for (const char* sub : {"train", "eval", "predict", "inspect", "gradcheck", "plot"}) {
        CHECK(run_cli(std::string(sub) + " --help").exit_code == 0);
    }
    CHECK(run_cli("").exit_code == 2);                      // missing subcommand
    CHECK(run_cli("frobnicate").exit_code == 2);            // unknown subcommand
    CHECK(run_cli("inspect --model cnn --bogus 1").exit_code == 2); // unknown flag
    CHECK(run_cli("inspect").exit_code == 2);               // neither model nor checkpoint
    CHECK(run_cli("train --data /tmp --model lstm").exit_code == 2);
}

TEST_CASE("a bad dataset is a runtime error, not a usage error") {
    const auto dir = fresh_temp_dir("tgocr_cli_baddata");
    // nonexistent directory
    CHECK(run_cli("train --data " + (dir / "missing").string() + " --model mlp --epochs 1")
              .exit_code == 1);
    // directory without any bitmaps
    CHECK(run_cli("train --data " + dir.string() + " --model mlp --epochs 1").exit_code == 1);
}

TEST_CASE("inspect prints layer tables and totals") {
    auto cnn = run_cli("inspect --model cnn");
    CHECK(cnn.exit_code == 0);
    CHECK(cnn.output.find("total params: 75383") != std::string::npos);
    CHECK(cnn.output.find("30x28x28") != std::string::npos);
    CHECK(cnn.output.find("780") != std::string::npos);

    auto mlp = run_cli("inspect --model mlp");
    CHECK(mlp.exit_code == 0);
    CHECK(mlp.output.find("total params: 591754") != std::string::npos);
    CHECK(mlp.output.find("591745") != std::string::npos); // the documented 9-unit discrepancy
}

TEST_CASE("train, eval, predict and plot work end to end on a synthetic dataset") {
    const auto dir = fresh_temp_dir("tgocr_cli_e2e");
    write_synthetic_dataset(dir / "db", 6, 4242);
    const auto ckpt = (dir / "model.ckpt").string();
    const auto metrics = (dir / "metrics.csv").string();

    auto trained = run_cli("train --data " + (dir / "db").string() +
                           " --model mlp --epochs 3 --batch-size 16 --seed 5 --out " + ckpt +
                           " --metrics " + metrics);
    CHECK(trained.exit_code == 0);
    CHECK(trained.output.find("final: train=") != std::string::npos);
    CHECK(trained.output.find("test=") != std::string::npos);

    auto rows = read_metrics_csv(metrics);
    CHECK(rows.size() == 3);

    SUBCASE("eval prints a one-decimal percentage and a 10x10 confusion csv") {
        auto eval = run_cli("eval --checkpoint " + ckpt + " --data " + (dir / "db").string());
        CHECK(eval.exit_code == 0);
        CHECK(eval.output.find("accuracy: ") != std::string::npos);
        std::stringstream ss(eval.output);
        std::string line;
        std::getline(ss, line);
        // "accuracy: NN.N"
        CHECK(line.find('.') == line.size() - 2);
        int confusion_rows = 0;
        while (std::getline(ss, line)) {
            if (!line.empty()) {
                CHECK(std::count(line.begin(), line.end(), ',') == 9);
                ++confusion_rows;
            }
        }
        CHECK(confusion_rows == 10);
    }

    SUBCASE("predict prints ten probabilities that sum to one") {
        const auto img = dir / "db" / "3" / "img_0000.bmp";
        auto pred = run_cli("predict --checkpoint " + ckpt + " --image " + img.string());
        CHECK(pred.exit_code == 0);
        CHECK(pred.output.find("predicted: ") != std::string::npos);
        CHECK(count_lines_matching(pred.output, ": ") >= 10);
        CHECK(count_lines_matching(pred.output, " *") == 1);

        double sum = 0.0;
        std::stringstream ss(pred.output);
        std::string line;
        std::getline(ss, line); // predicted: k
        for (int i = 0; i < 10; ++i) {
            REQUIRE(std::getline(ss, line));
            sum += std::stod(line.substr(line.find(':') + 1));
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
    }

    SUBCASE("plot renders exactly two polylines") {
        const auto svg_path = (dir / "curve.svg").string();
        auto plot = run_cli("plot --metrics " + metrics + " --out " + svg_path);
        CHECK(plot.exit_code == 0);
        const auto svg = slurp(svg_path);
        int polylines = 0;
        for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) {
            ++polylines;
        }
        CHECK(polylines == 2);
    }

    SUBCASE("inspect reads checkpoints") {
        auto ins = run_cli("inspect --checkpoint " + ckpt);
        CHECK(ins.exit_code == 0);
        CHECK(ins.output.find("total params: 591754") != std::string::npos);
    }
}

TEST_CASE("runtime failures exit 1") {
    const auto dir = fresh_temp_dir("tgocr_cli_err");
    CHECK(run_cli("eval --checkpoint " + (dir / "none.ckpt").string() + " --data " +
                  dir.string())
              .exit_code == 1);
    CHECK(run_cli("predict --checkpoint " + (dir / "none.ckpt").string() + " --image " +
                  (dir / "none.bmp").string())
              .exit_code == 1);

    // header-only metrics csv
    {
        std::ofstream out(dir / "empty.csv");
        out << kMetricsCsvHeader << "\n";
    }
    auto empty = run_cli("plot --metrics " + (dir / "empty.csv").string() + " --out " +
                         (dir / "x.svg").string(), true);
    CHECK(empty.exit_code == 1);

    // malformed row names the line number
    {
        std::ofstream out(dir / "bad.csv");
        out << kMetricsCsvHeader << "\n1,0.5,0.5,0.5,0.1\n2,oops,0.5,0.5,0.1\n";
    }
    auto bad = run_cli("plot --metrics " + (dir / "bad.csv").string() + " --out " +
                       (dir / "y.svg").string(), true);
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("line 3") != std::string::npos);

    // undecodable image
    {
        std::ofstream out(dir / "junk.bmp");
        out << "garbage";
    }
    const auto db = dir / "db";
    write_synthetic_dataset(db, 2, 6);
    const auto ckpt = (dir / "m.ckpt").string();
    REQUIRE(run_cli("train --data " + db.string() + " --model mlp --epochs 1 --out " + ckpt +
                    " --metrics " + (dir / "m.csv").string())
                .exit_code == 0);
    CHECK(run_cli("predict --checkpoint " + ckpt + " --image " + (dir / "junk.bmp").string())
              .exit_code == 1);
}

TEST_CASE("gradcheck subcommand reports per-layer errors and passes") {
    auto r = run_cli("gradcheck --seed 11");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("mlp/dense1") != std::string::npos);
    CHECK(r.output.find("cnn/conv1") != std::string::npos);
    CHECK(count_lines_matching(r.output, "-> ok") == 2);
}

TEST_CASE("single-threaded training runs are byte reproducible") {
    const auto dir = fresh_temp_dir("tgocr_cli_det");
    write_synthetic_dataset(dir / "db", 4, 77);

    auto run_once = [&](const std::string& tag) {
        const auto ckpt = (dir / (tag + ".ckpt")).string();
        const auto csv = (dir / (tag + ".csv")).string();
        auto r = run_cli("train --data " + (dir / "db").string() +
                             " --model cnn --epochs 2 --batch-size 20 --seed 99 --out " + ckpt +
                             " --metrics " + csv,
                         false, "TGOCR_THREADS=1");
        REQUIRE(r.exit_code == 0);
        return std::make_pair(slurp(csv), slurp(ckpt));
    };
    auto [csv_a, ckpt_a] = run_once("a");
    auto [csv_b, ckpt_b] = run_once("b");
    CHECK(!csv_a.empty());
    CHECK(csv_a == csv_b);
    CHECK(!ckpt_a.empty());
    CHECK(ckpt_a == ckpt_b);
}
