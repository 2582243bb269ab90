#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

#include "tgocr/data.hpp"
#include "tgocr/metrics.hpp"
#include "tgocr/model.hpp"

namespace tgocr {

struct TrainConfig {
    int epochs = 1000;
    int batch_size = 128;
    std::uint64_t seed = 42;
    AdadeltaConfig adadelta;
    std::filesystem::path metrics_path;    // empty: keep metrics in memory only
    std::filesystem::path checkpoint_path; // empty: never write checkpoints
    int checkpoint_every = 50;             // 0: only at the end

    void validate() const {
        if (epochs < 1) {
            throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
        }
        if (batch_size < 1) {
            throw ConfigError("batch size must be >= 1, got " + std::to_string(batch_size));
        }
        adadelta.validate();
    }
};

struct EvalResult {
    double accuracy = 0.0;
    std::array<std::array<index_t, 10>, 10> confusion{}; // [true][predicted]
};

// Eval-mode pass over the samples: predicted class is the argmax of the
// output row (ties to the lowest index).
EvalResult evaluate(SequentialModel<float>& model, const std::vector<Sample>& samples);

// Runs the training loop: per epoch a seeded reshuffle, train-mode
// forward/backward over every batch with an Adadelta step per parameterized
// layer, then eval-mode accuracy on both splits. Metrics are appended to the
// CSV after every epoch; checkpoints are written every `checkpoint_every`
// epochs and at the end.
std::vector<EpochMetrics> train(SequentialModel<float>& model, const SplitDataset& dataset,
                                const TrainConfig& config,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

} // namespace tgocr
