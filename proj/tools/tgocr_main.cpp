// Command-line front end: train, evaluate, predict, inspect, gradcheck, plot.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tgocr/checkpoint.hpp"
#include "tgocr/data.hpp"
#include "tgocr/gradcheck.hpp"
#include "tgocr/metrics.hpp"
#include "tgocr/model.hpp"
#include "tgocr/train.hpp"

namespace {

using namespace tgocr;

struct TrainArgs {
    std::string data_dir;
    std::string model_name;
    int epochs = 1000;
    int batch_size = 128;
    std::uint64_t seed = 42;
    double lr = 1.0;
    double rho = 0.95;
    double eps = 1e-6;
    std::string out;
    std::string metrics;
    int checkpoint_every = 50;
};

struct EvalArgs {
    std::string checkpoint;
    std::string data_dir;
    std::string split = "test";
};

struct PredictArgs {
    std::string checkpoint;
    std::string image;
};

struct InspectArgs {
    std::string model_name;
    std::string checkpoint;
};

struct GradcheckArgs {
    std::uint64_t seed = 7;
    double tolerance = 1e-4;
};

struct PlotArgs {
    std::string metrics;
    std::string out;
};

void print_class_counts(const SplitDataset& ds) {
    auto line = [](const char* name, const std::array<int, 10>& counts, std::size_t total) {
        std::printf("%s: %zu samples (", name, total);
        for (int c = 0; c < 10; ++c) {
            std::printf("%s%d", c ? " " : "", counts[static_cast<std::size_t>(c)]);
        }
        std::printf(")\n");
    };
    line("train", ds.train_per_class, ds.train.size());
    line("test", ds.test_per_class, ds.test.size());
}

SequentialModel<float> build_by_name(const std::string& name, std::uint64_t seed) {
    return name == "cnn" ? build_cnn<float>(seed) : build_mlp<float>(seed);
}

int cmd_train(const TrainArgs& args) {
    auto dataset = load_dataset(args.data_dir);
    print_class_counts(dataset);

    auto model = build_by_name(args.model_name, args.seed);
    TrainConfig cfg;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch_size;
    cfg.seed = args.seed;
    cfg.adadelta = {args.lr, args.rho, args.eps};
    cfg.checkpoint_every = args.checkpoint_every;
    cfg.checkpoint_path = args.out.empty() ? args.model_name + ".ckpt" : args.out;
    cfg.metrics_path = args.metrics.empty() ? args.model_name + "_metrics.csv" : args.metrics;

    auto history = train(model, dataset, cfg, [&](const EpochMetrics& m) {
        std::printf("epoch %d/%d  loss=%.6f  train=%.4f  test=%.4f  (%.1fs)\n", m.epoch,
                    cfg.epochs, m.train_loss, m.train_acc, m.test_acc, m.seconds);
        std::fflush(stdout);
    });
    std::printf("final: train=%.6f test=%.6f\n", history.back().train_acc,
                history.back().test_acc);
    return 0;
}

int cmd_eval(const EvalArgs& args) {
    auto model = load_checkpoint(args.checkpoint);
    auto dataset = load_dataset(args.data_dir);
    const auto& samples = args.split == "train" ? dataset.train : dataset.test;
    auto result = evaluate(model, samples);
    std::printf("accuracy: %.1f\n", result.accuracy * 100.0);
    for (const auto& row : result.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            std::printf("%s%lld", j ? "," : "", static_cast<long long>(row[j]));
        }
        std::printf("\n");
    }
    return 0;
}

int cmd_predict(const PredictArgs& args) {
    auto model = load_checkpoint(args.checkpoint);
    auto image = preprocess(load_bitmap(args.image));

    Tensor<float> batch(Shape{1, 1, 32, 32});
    std::copy(image.values().begin(), image.values().end(), batch.values().begin());
    auto probs = model.forward(batch, Mode::eval);

    index_t best = 0;
    for (index_t j = 1; j < 10; ++j) {
        if (probs(0, j) > probs(0, best)) {
            best = j;
        }
    }
    std::printf("predicted: %lld\n", static_cast<long long>(best));
    for (index_t j = 0; j < 10; ++j) {
        std::printf("%lld: %.6f%s\n", static_cast<long long>(j),
                    static_cast<double>(probs(0, j)), j == best ? " *" : "");
    }
    return 0;
}

int cmd_inspect(const InspectArgs& args) {
    auto model = args.checkpoint.empty() ? build_by_name(args.model_name, 42)
                                         : load_checkpoint(args.checkpoint);
    std::printf("architecture: %s  input: 1x32x32  classes: %d\n", model.tag().c_str(),
                model.classes());
    std::printf("%-4s %-10s %-14s %s\n", "#", "layer", "output", "params");
    const auto rows = model.describe();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string shape;
        for (int d = 0; d < rows[i].output_shape.rank(); ++d) {
            shape += (d ? "x" : "") + std::to_string(rows[i].output_shape[d]);
        }
        std::printf("%-4zu %-10s %-14s %lld\n", i + 1, rows[i].kind.c_str(), shape.c_str(),
                    static_cast<long long>(rows[i].params));
    }
    std::printf("total params: %lld\n", static_cast<long long>(model.param_count()));
    if (model.tag() == "mlp") {
        std::printf("note: the commonly quoted total for this architecture is 591745; the layer "
                    "arithmetic (1024*512+512 + 512*128+128 + 128*10+10) gives 591754.\n");
    }
    return 0;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    bool ok = true;
    for (const char* arch : {"mlp", "cnn"}) {
        auto report = gradcheck(arch, args.seed, args.tolerance);
        for (const auto& entry : report.per_layer) {
            std::printf("%s/%-8s checked=%-5lld skipped=%-3lld max_rel_err=%.3e\n", arch,
                        entry.layer.c_str(), static_cast<long long>(entry.params_checked),
                        static_cast<long long>(entry.params_skipped), entry.max_rel_err);
        }
        std::printf("%s: max_rel_err=%.3e tolerance=%.1e -> %s\n", arch, report.max_rel_err,
                    report.tolerance, report.passed ? "ok" : "FAILED");
        ok = ok && report.passed;
    }
    return ok ? 0 : 1;
}

int cmd_plot(const PlotArgs& args) {
    auto rows = read_metrics_csv(args.metrics);
    write_file_atomic(args.out, render_metrics_svg(rows));
    std::printf("wrote %s (%zu epochs)\n", args.out.c_str(), rows.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"from-scratch MLP/CNN engine for 32x32 handwritten digit bitmaps"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
    train_cmd->add_option("--data", train_args.data_dir, "dataset root directory")->required();
    train_cmd->add_option("--model", train_args.model_name, "architecture (mlp or cnn)")
        ->required()
        ->check(CLI::IsMember({"mlp", "cnn"}));
    train_cmd->add_option("--epochs", train_args.epochs, "training epochs")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch-size", train_args.batch_size, "minibatch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", train_args.seed, "rng seed")->capture_default_str();
    train_cmd->add_option("--lr", train_args.lr, "adadelta learning rate")->capture_default_str();
    train_cmd->add_option("--rho", train_args.rho, "adadelta decay")->capture_default_str();
    train_cmd->add_option("--eps", train_args.eps, "adadelta epsilon")->capture_default_str();
    train_cmd->add_option("--out", train_args.out, "checkpoint path (default <model>.ckpt)");
    train_cmd->add_option("--metrics", train_args.metrics,
                          "metrics csv path (default <model>_metrics.csv)");
    train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every,
                          "checkpoint cadence in epochs, 0 for end only")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_args.data_dir, "dataset root directory")->required();
    eval_cmd->add_option("--split", eval_args.split, "split to evaluate")
        ->capture_default_str()
        ->check(CLI::IsMember({"test", "train"}));

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "classify a single 32x32 bitmap");
    predict_cmd->add_option("--checkpoint", predict_args.checkpoint, "checkpoint file")
        ->required();
    predict_cmd->add_option("--image", predict_args.image, "bitmap file")->required();

    InspectArgs inspect_args;
    auto* inspect_cmd = app.add_subcommand("inspect", "print a per-layer architecture table");
    auto* inspect_src = inspect_cmd->add_option_group("source");
    inspect_src->add_option("--model", inspect_args.model_name, "architecture (mlp or cnn)")
        ->check(CLI::IsMember({"mlp", "cnn"}));
    inspect_src->add_option("--checkpoint", inspect_args.checkpoint, "checkpoint file");
    inspect_src->require_option(1);

    GradcheckArgs gradcheck_args;
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
    gradcheck_cmd->add_option("--seed", gradcheck_args.seed, "rng seed")->capture_default_str();
    gradcheck_cmd->add_option("--tolerance", gradcheck_args.tolerance, "max relative error")
        ->capture_default_str();

    PlotArgs plot_args;
    auto* plot_cmd = app.add_subcommand("plot", "render a metrics csv as an svg chart");
    plot_cmd->add_option("--metrics", plot_args.metrics, "metrics csv file")->required();
    plot_cmd->add_option("--out", plot_args.out, "output svg path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2; // help exits 0, every parse failure is a usage error
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (predict_cmd->parsed()) return cmd_predict(predict_args);
        if (inspect_cmd->parsed()) return cmd_inspect(inspect_args);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_args);
        if (plot_cmd->parsed()) return cmd_plot(plot_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
