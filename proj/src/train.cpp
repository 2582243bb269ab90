#include "tgocr/train.hpp"

#include <chrono>
#include <cstring>
#include <fstream>

#include "tgocr/checkpoint.hpp"
#include "tgocr/parallel.hpp"

namespace tgocr {

namespace {

constexpr index_t kEvalBatch = 256;

index_t argmax_row(const float* row, index_t n) {
    index_t best = 0;
    for (index_t j = 1; j < n; ++j) {
        if (row[j] > row[best]) {
            best = j;
        }
    }
    return best;
}

} // namespace

EvalResult evaluate(SequentialModel<float>& model, const std::vector<Sample>& samples) {
    if (samples.empty()) {
        throw DataError("evaluate called with no samples");
    }
    EvalResult result;
    const index_t n = static_cast<index_t>(samples.size());
    const index_t pixels = samples[0].image.size();
    index_t correct = 0;
    for (index_t start = 0; start < n; start += kEvalBatch) {
        const index_t b = std::min(kEvalBatch, n - start);
        std::vector<index_t> dims{b};
        for (index_t d : model.input_shape().dims()) {
            dims.push_back(d);
        }
        Tensor<float> batch{Shape(dims)};
        for (index_t i = 0; i < b; ++i) {
            std::memcpy(batch.data() + i * pixels,
                        samples[static_cast<std::size_t>(start + i)].image.data(),
                        sizeof(float) * static_cast<std::size_t>(pixels));
        }
        Tensor<float> probs = model.forward(batch, Mode::eval);
        for (index_t i = 0; i < b; ++i) {
            const int truth = samples[static_cast<std::size_t>(start + i)].label;
            const index_t predicted = argmax_row(probs.data() + i * model.classes(),
                                                 model.classes());
            result.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)]++;
            if (predicted == truth) {
                ++correct;
            }
        }
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return result;
}

std::vector<EpochMetrics> train(SequentialModel<float>& model, const SplitDataset& dataset,
                                const TrainConfig& config,
                                const std::function<void(const EpochMetrics&)>& on_epoch) {
    config.validate();
    if (dataset.train.empty()) {
        throw DataError("training split is empty");
    }

    std::ofstream metrics_out;
    if (!config.metrics_path.empty()) {
        metrics_out.open(config.metrics_path, std::ios::trunc);
        if (!metrics_out) {
            throw IoError("cannot open metrics file for writing: " +
                          config.metrics_path.string());
        }
        metrics_out << kMetricsCsvHeader << '\n';
        metrics_out.flush();
    }

    auto save = [&](const char* when) {
        if (config.checkpoint_path.empty()) {
            return;
        }
        try {
            save_checkpoint(model, config.checkpoint_path);
        } catch (const Error& e) {
            throw IoError(std::string("checkpoint write failed (") + when + "): " + e.what());
        }
    };

    std::vector<EpochMetrics> history;
    const auto sets = model.param_sets();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();

        double loss_sum = 0.0;
        auto batches = make_batches(dataset.train, config.batch_size,
                                    derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
        for (const Batch& batch : batches) {
            Tensor<float> logits = model.forward_logits(batch.images, Mode::train);
            LossResult<float> loss = softmax_cross_entropy(logits, batch.targets);
            model.backward(loss.grad_logits);
            for (ParamSet<float>* ps : sets) {
                adadelta_step(*ps, config.adadelta);
            }
            loss_sum += loss.mean_loss * static_cast<double>(batch.labels.size());
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(dataset.train.size());
        m.train_acc = evaluate(model, dataset.train).accuracy;
        m.test_acc = dataset.test.empty() ? 0.0 : evaluate(model, dataset.test).accuracy;
        // Wall-clock timing is the one nondeterministic column; zeroed when
        // the thread cap pins the run to reproducible mode.
        m.seconds = deterministic_mode()
                        ? 0.0
                        : std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                        epoch_start)
                              .count();
        history.push_back(m);

        if (metrics_out.is_open()) {
            metrics_out << metrics_csv_row(m) << '\n';
            metrics_out.flush();
            if (!metrics_out) {
                throw IoError("failed writing metrics to " + config.metrics_path.string());
            }
        }
        if (on_epoch) {
            on_epoch(m);
        }
        if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 &&
            epoch != config.epochs) {
            save("periodic");
        }
    }
    save("final");
    return history;
}

} // namespace tgocr
