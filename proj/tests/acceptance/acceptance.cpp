// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. The dataset-scale criterion is skipped visibly unless the
// CMATERDB 3.3.1 directory is present (TGOCR_CMATERDB or ./data/cmaterdb-3.3.1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "tgocr/checkpoint.hpp"
#include "tgocr/data.hpp"
#include "tgocr/gradcheck.hpp"
#include "tgocr/layers.hpp"
#include "tgocr/model.hpp"
#include "tgocr/optim.hpp"
#include "tgocr/train.hpp"

#include "support/fd.hpp"
#include "support/oracles.hpp"
#include "support/testdata.hpp"

using namespace tgocr;
using namespace tgocr::testing;

namespace {

int failures = 0;

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (!detail.empty()) {
                detail += "; ";
            }
            detail += what;
        }
    }
};

void run_criterion(int number, const std::string& name,
                   const std::function<void(Outcome&)>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
        body(outcome);
    } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.ok) {
        std::printf("[PASS] %2d %-28s (%.1fs)\n", number, name.c_str(), secs);
    } else {
        ++failures;
        std::printf("[FAIL] %2d %-28s (%.1fs) %s\n", number, name.c_str(), secs,
                    outcome.detail.c_str());
    }
    std::fflush(stdout);
}

void skip_criterion(int number, const std::string& name, const std::string& why) {
    std::printf("[SKIP] %2d %-28s %s\n", number, name.c_str(), why.c_str());
    std::fflush(stdout);
}

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    std::string command = env_prefix.empty() ? "" : env_prefix + " ";
    command += std::string(TGOCR_CLI_PATH) + " " + args + " 2>/dev/null";
    CliResult result;
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) {
        result.exit_code = -1;
        return result;
    }
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) {
        result.output.append(buf, n);
    }
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (auto& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

// values bounded away from zero, for kink-free relu differencing
Tensor<double> random_tensor_offzero(Shape s, Rng& rng) {
    Tensor<double> t(s);
    for (auto& v : t.values()) {
        const double mag = rng.uniform(0.05, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

double contracted(Layer<double>& layer, const Tensor<double>& x, const Tensor<double>& cot) {
    Tensor<double> y = layer.forward(x, Mode::train);
    double acc = 0.0;
    for (index_t i = 0; i < y.size(); ++i) {
        acc += y(i) * cot(i);
    }
    return acc;
}

// --------------------------------------------------------------------------
// criterion bodies
// --------------------------------------------------------------------------

void criterion_cnn_params(Outcome& o) {
    auto r = run_cli("inspect --model cnn");
    o.require(r.exit_code == 0, "inspect --model cnn exited " + std::to_string(r.exit_code));
    o.require(r.output.find("total params: 75383") != std::string::npos,
              "expected total 75383 in output");
}

void criterion_mlp_params(Outcome& o) {
    auto r = run_cli("inspect --model mlp");
    o.require(r.exit_code == 0, "inspect --model mlp exited " + std::to_string(r.exit_code));
    o.require(r.output.find("total params: 591754") != std::string::npos,
              "expected total 591754 in output");
    o.require(r.output.find("591745") != std::string::npos,
              "expected the documented 591745 note");
}

void criterion_gradients(Outcome& o) {
    constexpr double kTol = 1e-4;
    int configurations = 0;
    double worst = 0.0;
    Rng rng(90210);

    auto check = [&](std::span<const double> analytic, const std::vector<double>& numeric) {
        worst = std::max(worst, max_rel_err(analytic, numeric));
    };

    // dense layers, random widths
    for (int iter = 0; iter < 15; ++iter) {
        const index_t batch = 1 + static_cast<index_t>(rng.below(4));
        const index_t n_in = 1 + static_cast<index_t>(rng.below(8));
        const index_t n_out = 1 + static_cast<index_t>(rng.below(6));
        DenseLayer<double> layer(n_in, n_out, rng);
        auto x = random_tensor(Shape{batch, n_in}, rng);
        auto cot = random_tensor(Shape{batch, n_out}, rng);
        auto objective = [&]() { return contracted(layer, x, cot); };
        auto fd_w = central_differences(objective, layer.params()->weights.values());
        auto fd_b = central_differences(objective, layer.params()->bias.values());
        auto fd_x = central_differences(objective, x.values());
        layer.forward(x, Mode::train);
        auto gin = layer.backward(cot);
        check(layer.params()->grad_weights.values(), fd_w);
        check(layer.params()->grad_bias.values(), fd_b);
        check(gin.values(), fd_x);
        ++configurations;
    }

    // conv layers, random channel/kernel geometry
    for (int iter = 0; iter < 15; ++iter) {
        const index_t batch = 1 + static_cast<index_t>(rng.below(3));
        const index_t c_in = 1 + static_cast<index_t>(rng.below(3));
        const index_t c_out = 1 + static_cast<index_t>(rng.below(3));
        const index_t k = 1 + static_cast<index_t>(rng.below(3));
        const index_t h = k + static_cast<index_t>(rng.below(4));
        const index_t w = k + static_cast<index_t>(rng.below(4));
        Conv2dLayer<double> layer(c_in, c_out, k, rng);
        auto x = random_tensor(Shape{batch, c_in, h, w}, rng);
        auto cot = random_tensor(Shape{batch, c_out, h - k + 1, w - k + 1}, rng);
        auto objective = [&]() { return contracted(layer, x, cot); };
        auto fd_w = central_differences(objective, layer.params()->weights.values());
        auto fd_b = central_differences(objective, layer.params()->bias.values());
        auto fd_x = central_differences(objective, x.values());
        layer.forward(x, Mode::train);
        auto gin = layer.backward(cot);
        check(layer.params()->grad_weights.values(), fd_w);
        check(layer.params()->grad_bias.values(), fd_b);
        check(gin.values(), fd_x);
        ++configurations;
    }

    // maxpool: inputs spaced so no window has a near-tie
    for (int iter = 0; iter < 8; ++iter) {
        const index_t c = 1 + static_cast<index_t>(rng.below(3));
        const index_t h = 2 * (1 + static_cast<index_t>(rng.below(3)));
        const index_t w = 2 * (1 + static_cast<index_t>(rng.below(3)));
        MaxPool2x2Layer<double> layer;
        Tensor<double> x(Shape{1, c, h, w});
        auto order = shuffled_indices(static_cast<std::size_t>(x.size()), rng.next_u64());
        for (index_t i = 0; i < x.size(); ++i) {
            x(i) = 0.02 * static_cast<double>(order[static_cast<std::size_t>(i)]);
        }
        auto cot = random_tensor(Shape{1, c, h / 2, w / 2}, rng);
        auto objective = [&]() { return contracted(layer, x, cot); };
        auto fd_x = central_differences(objective, x.values());
        layer.forward(x, Mode::train);
        auto gin = layer.backward(cot);
        check(gin.values(), fd_x);
        ++configurations;
    }

    // relu with inputs bounded away from the kink
    for (int iter = 0; iter < 5; ++iter) {
        ReluLayer<double> layer;
        auto x = random_tensor_offzero(Shape{2, 12}, rng);
        auto cot = random_tensor(Shape{2, 12}, rng);
        auto objective = [&]() { return contracted(layer, x, cot); };
        auto fd_x = central_differences(objective, x.values());
        layer.forward(x, Mode::train);
        auto gin = layer.backward(cot);
        check(gin.values(), fd_x);
        ++configurations;
    }

    // flatten
    for (int iter = 0; iter < 5; ++iter) {
        FlattenLayer<double> layer;
        auto x = random_tensor(Shape{2, 2, 3, 3}, rng);
        auto cot = random_tensor(Shape{2, 18}, rng);
        auto objective = [&]() { return contracted(layer, x, cot); };
        auto fd_x = central_differences(objective, x.values());
        layer.forward(x, Mode::train);
        auto gin = layer.backward(cot);
        check(gin.values(), fd_x);
        ++configurations;
    }

    // standalone softmax layer
    for (int iter = 0; iter < 5; ++iter) {
        SoftmaxLayer<double> layer;
        auto x = random_tensor(Shape{3, 10}, rng, -2.0, 2.0);
        auto cot = random_tensor(Shape{3, 10}, rng);
        auto objective = [&]() { return contracted(layer, x, cot); };
        auto fd_x = central_differences(objective, x.values());
        layer.forward(x, Mode::train);
        auto gin = layer.backward(cot);
        check(gin.values(), fd_x);
        ++configurations;
    }

    // fused softmax cross-entropy on logits
    for (int iter = 0; iter < 5; ++iter) {
        const index_t batch = 1 + static_cast<index_t>(rng.below(4));
        auto logits = random_tensor(Shape{batch, 10}, rng, -2.0, 2.0);
        Tensor<double> targets(Shape{batch, 10});
        for (index_t i = 0; i < batch; ++i) {
            targets(i, static_cast<index_t>(rng.below(10))) = 1.0;
        }
        auto loss = [&]() { return softmax_cross_entropy(logits, targets).mean_loss; };
        auto fd = central_differences(loss, logits.values());
        auto r = softmax_cross_entropy(logits, targets);
        check(r.grad_logits.values(), fd);
        ++configurations;
    }

    // dropout with a frozen mask: backward must match differencing of the
    // masked-and-scaled forward map
    for (int iter = 0; iter < 5; ++iter) {
        DropoutLayer<double> layer(0.25, rng.next_u64());
        auto x = random_tensor(Shape{2, 16}, rng);
        auto cot = random_tensor(Shape{2, 16}, rng);
        layer.forward(x, Mode::train); // draws the mask used below
        const Tensor<double> mask = layer.last_mask();
        auto masked_objective = [&]() {
            double acc = 0.0;
            for (index_t i = 0; i < x.size(); ++i) {
                acc += x(i) * mask(i) * (1.0 / 0.75) * cot(i);
            }
            return acc;
        };
        auto fd_x = central_differences(masked_objective, x.values());
        auto gin = layer.backward(cot);
        check(gin.values(), fd_x);
        ++configurations;
    }

    // full reduced models through the library harness
    for (std::uint64_t seed : {501ULL, 502ULL}) {
        for (const char* arch : {"mlp", "cnn"}) {
            auto report = gradcheck(arch, seed, kTol);
            o.require(report.passed, std::string(arch) + " harness max_rel_err " +
                                         std::to_string(report.max_rel_err));
            worst = std::max(worst, report.max_rel_err);
            ++configurations;
        }
    }

    o.require(configurations >= 50,
              "only " + std::to_string(configurations) + " configurations");
    o.require(worst < kTol, "max relative error " + std::to_string(worst));
    std::printf("       gradients: %d configurations, max relative error %.3e\n", configurations,
                worst);
}

void criterion_conv_oracle(Outcome& o) {
    Rng rng(777);
    double worst = 0.0;
    int cases = 0;
    while (cases < 120) {
        const index_t C = 1 + static_cast<index_t>(rng.below(3));
        const index_t H = 2 + static_cast<index_t>(rng.below(7));
        const index_t W = 2 + static_cast<index_t>(rng.below(7));
        const index_t O = 1 + static_cast<index_t>(rng.below(3));
        const index_t kh = 1 + static_cast<index_t>(rng.below(static_cast<std::uint64_t>(H)));
        const index_t kw = 1 + static_cast<index_t>(rng.below(static_cast<std::uint64_t>(W)));
        auto in = random_tensor(Shape{C, H, W}, rng);
        auto ker = random_tensor(Shape{O, C, kh, kw}, rng);
        auto bias = random_tensor(Shape{O}, rng);
        auto fast = conv2d_valid(in, ker, bias);
        auto ref = conv2d_reference(in, ker, bias);
        for (index_t i = 0; i < fast.size(); ++i) {
            worst = std::max(worst, rel_err(fast(i), ref(i), 1.0));
        }
        ++cases;
    }
    o.require(worst < 1e-6, "max relative error vs oracle " + std::to_string(worst));
    std::printf("       conv oracle: %d cases, max relative error %.3e\n", cases, worst);
}

void criterion_overfit(Outcome& o) {
    // fixed stratified 64-sample subset: 7 samples for classes 0-3, 6 for 4-9
    SplitDataset ds;
    for (int label = 0; label <= 9; ++label) {
        const int count = label < 4 ? 7 : 6;
        for (int i = 0; i < count; ++i) {
            ds.train.push_back(
                {preprocess(decode_bitmap(encode_bmp(synthetic_digit(label, 640, i)))), label});
            ds.train_per_class[label]++;
        }
    }
    auto model = build_cnn<float>(64);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 128;
    cfg.seed = 64;
    auto history = train(model, ds, cfg);

    int first_perfect = -1;
    for (const auto& m : history) {
        if (m.train_acc == 1.0) {
            first_perfect = m.epoch;
            break;
        }
    }
    o.require(first_perfect > 0 && first_perfect <= 200,
              "training accuracy never reached 1.0 in 200 epochs");
    o.require(history.back().train_loss < 0.1 * history.front().train_loss,
              "final loss " + std::to_string(history.back().train_loss) +
                  " not below 0.1 x initial " + std::to_string(history.front().train_loss));
    std::printf("       overfit: 64 samples, accuracy 1.0 at epoch %d, loss %.4f -> %.6f\n",
                first_perfect, history.front().train_loss, history.back().train_loss);
}

std::filesystem::path find_cmaterdb() {
    if (const char* env = std::getenv("TGOCR_CMATERDB")) {
        if (std::filesystem::is_directory(env)) {
            return env;
        }
    }
    for (const char* candidate : {"data/cmaterdb-3.3.1", "../data/cmaterdb-3.3.1",
                                  "../../data/cmaterdb-3.3.1"}) {
        if (std::filesystem::is_directory(candidate)) {
            return candidate;
        }
    }
    return {};
}

void criterion_dataset_accuracy(Outcome& o, const std::filesystem::path& root) {
    auto dataset = load_dataset(root);
    o.require(dataset.train.size() == 2000,
              "expected 2000 training samples, got " + std::to_string(dataset.train.size()));
    o.require(dataset.test.size() == 1000,
              "expected 1000 test samples, got " + std::to_string(dataset.test.size()));

    {
        auto cnn = build_cnn<float>(42);
        TrainConfig cfg;
        cfg.epochs = 150;
        cfg.seed = 42;
        auto history = train(cnn, dataset, cfg);
        double best = 0.0;
        for (const auto& m : history) {
            best = std::max(best, m.test_acc);
        }
        o.require(best >= 0.96, "cnn best test accuracy " + std::to_string(best) + " < 0.96");
        std::printf("       cnn: best test accuracy %.4f within 150 epochs\n", best);
    }
    {
        auto mlp = build_mlp<float>(42);
        TrainConfig cfg;
        cfg.epochs = 300;
        cfg.seed = 42;
        auto history = train(mlp, dataset, cfg);
        double best = 0.0;
        for (const auto& m : history) {
            best = std::max(best, m.test_acc);
        }
        o.require(best >= 0.92, "mlp best test accuracy " + std::to_string(best) + " < 0.92");
        std::printf("       mlp: best test accuracy %.4f within 300 epochs\n", best);
    }
}

void criterion_determinism(Outcome& o) {
    const auto dir = fresh_temp_dir("tgocr_accept_det");
    write_synthetic_dataset(dir / "db", 8, 1234);

    auto run_once = [&](const std::string& tag) {
        const auto ckpt = (dir / (tag + ".ckpt")).string();
        const auto csv = (dir / (tag + ".csv")).string();
        auto r = run_cli("train --data " + (dir / "db").string() +
                             " --model cnn --epochs 5 --batch-size 128 --seed 7 --out " + ckpt +
                             " --metrics " + csv,
                         "TGOCR_THREADS=1");
        o.require(r.exit_code == 0, "train run exited " + std::to_string(r.exit_code));
        return std::make_pair(slurp(csv), slurp(ckpt));
    };
    auto [csv_a, ckpt_a] = run_once("a");
    auto [csv_b, ckpt_b] = run_once("b");
    o.require(!csv_a.empty() && csv_a == csv_b, "metrics CSVs differ between identical runs");
    o.require(!ckpt_a.empty() && ckpt_a == ckpt_b, "checkpoints differ between identical runs");
}

void criterion_checkpoint_roundtrip(Outcome& o) {
    const auto dir = fresh_temp_dir("tgocr_accept_ckpt");
    auto model = build_cnn<float>(2025);
    const auto path = dir / "model.ckpt";
    save_checkpoint(model, path);
    auto loaded = load_checkpoint(path);

    Rng rng(31415);
    Tensor<float> x(Shape{100, 1, 32, 32});
    for (auto& v : x.values()) {
        v = static_cast<float>(rng.uniform());
    }
    auto before = model.forward(x, Mode::eval);
    auto after = loaded.forward(x, Mode::eval);
    bool identical = true;
    for (index_t i = 0; i < before.size(); ++i) {
        identical = identical && before(i) == after(i);
    }
    o.require(identical, "predictions changed across a save/load round trip");

    auto corrupt = [&](const std::string& name, std::size_t at, std::uint8_t xor_mask,
                       bool truncate) {
        auto bytes = slurp(path);
        if (truncate) {
            bytes.resize(bytes.size() / 3);
        } else {
            bytes[at] = static_cast<char>(bytes[at] ^ xor_mask);
        }
        const auto bad = dir / name;
        std::ofstream out(bad, std::ios::binary | std::ios::trunc);
        out << bytes;
        out.close();
        try {
            load_checkpoint(bad);
            return false; // a corrupted file must never load
        } catch (const CheckpointError&) {
            return true;
        }
    };
    o.require(corrupt("magic.ckpt", 2, 0xFF, false), "corrupted magic was accepted");
    o.require(corrupt("tensor.ckpt", 4000, 0x20, false), "flipped tensor byte was accepted");
    o.require(corrupt("cut.ckpt", 0, 0, true), "truncated file was accepted");
}

void criterion_preprocess(Outcome& o) {
    auto value_of = [](Pixel p) {
        return static_cast<double>(preprocess(decode_bitmap(encode_bmp(solid_image(p))))(0));
    };
    o.require(std::fabs(value_of({255, 255, 255}) - 0.0) < 1e-6, "white must map to 0.0");
    o.require(std::fabs(value_of({0, 0, 0}) - 1.0) < 1e-6, "black must map to 1.0");
    o.require(std::fabs(value_of({76, 150, 29}) - 0.552941) < 1e-6,
              "(76,150,29) must map to ~0.552941");
}

void criterion_softmax_loss(Outcome& o) {
    Rng rng(2718);
    for (int iter = 0; iter < 200; ++iter) {
        auto x = random_tensor(Shape{4, 10}, rng, -25.0, 25.0);
        auto p = softmax_rows(x);
        for (index_t i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (index_t j = 0; j < 10; ++j) {
                o.require(p(i, j) > 0.0, "softmax output not strictly positive");
                sum += p(i, j);
            }
            o.require(std::fabs(sum - 1.0) < 1e-12, "softmax row sum off by more than 1e-12");
        }
    }

    Tensor<double> uniform(Shape{8, 10});
    Tensor<double> targets(Shape{8, 10});
    for (index_t i = 0; i < 8; ++i) {
        targets(i, i % 10) = 1.0;
    }
    auto r = softmax_cross_entropy(uniform, targets);
    o.require(std::fabs(r.mean_loss - std::log(10.0)) < 1e-9,
              "uniform-logits loss differs from ln 10 by more than 1e-9");

    for (int iter = 0; iter < 50; ++iter) {
        auto logits = random_tensor(Shape{4, 10}, rng, -5.0, 5.0);
        Tensor<double> y(Shape{4, 10});
        for (index_t i = 0; i < 4; ++i) {
            y(i, static_cast<index_t>(rng.below(10))) = 1.0;
        }
        auto res = softmax_cross_entropy(logits, y);
        for (index_t i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (index_t j = 0; j < 10; ++j) {
                sum += res.grad_logits(i, j);
            }
            o.require(std::fabs(sum) < 1e-9, "gradient row sum off by more than 1e-9");
        }
    }
}

} // namespace

int main() {
    std::printf("acceptance suite\n");

    run_criterion(1, "cnn-parameter-count", criterion_cnn_params);
    run_criterion(2, "mlp-parameter-count", criterion_mlp_params);
    run_criterion(3, "gradient-checks", criterion_gradients);
    run_criterion(4, "conv-oracle-equivalence", criterion_conv_oracle);
    run_criterion(5, "overfit-sanity", criterion_overfit);

    const auto cmaterdb = find_cmaterdb();
    if (cmaterdb.empty()) {
        skip_criterion(6, "dataset-scale-accuracy",
                       "CMATERDB 3.3.1 not found (set TGOCR_CMATERDB or place it under "
                       "data/cmaterdb-3.3.1)");
    } else {
        run_criterion(6, "dataset-scale-accuracy",
                      [&](Outcome& o) { criterion_dataset_accuracy(o, cmaterdb); });
    }

    run_criterion(7, "determinism", criterion_determinism);
    run_criterion(8, "checkpoint-round-trip", criterion_checkpoint_roundtrip);
    run_criterion(9, "preprocessing-oracle", criterion_preprocess);
    run_criterion(10, "softmax-loss-properties", criterion_softmax_loss);

    if (failures == 0) {
        std::printf("all criteria passed\n");
    } else {
        std::printf("%d criterion(s) failed\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
