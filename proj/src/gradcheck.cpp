#include "tgocr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tgocr/model.hpp"

namespace tgocr {

namespace {

constexpr double kStep = 1e-3;
constexpr int kMaxInputBatches = 8;

// Relative error with a floor: near-zero gradient pairs are judged on an
// absolute scale instead of blowing up the quotient.
double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-2});
}

Tensor<double> random_batch(const Shape& per_sample, index_t batch, Rng& rng) {
    std::vector<index_t> dims{batch};
    for (index_t d : per_sample.dims()) {
        dims.push_back(d);
    }
    Tensor<double> x{Shape(dims)};
    for (auto& v : x.values()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return x;
}

Tensor<double> random_one_hot(index_t batch, index_t classes, Rng& rng) {
    Tensor<double> y(Shape{batch, classes});
    for (index_t i = 0; i < batch; ++i) {
        y(i, static_cast<index_t>(rng.below(static_cast<std::uint64_t>(classes)))) = 1.0;
    }
    return y;
}

// A finite-difference probe only estimates the gradient while both
// evaluations stay on the base linear region of every ReLU and max-pool.
// The signature captures each branch decision so crossings can be detected;
// the margins drive input resampling toward batches where crossings are
// unlikely in the first place.
struct Probe {
    double loss = 0.0;
    std::vector<std::int32_t> signature;
    double min_relu_margin = 1e300; // smallest |relu input|
    double min_pool_gap = 1e300;    // smallest winner-vs-positive-runner-up gap
};

Probe forward_probe(SequentialModel<double>& model, const Tensor<double>& x,
                    const Tensor<double>& y) {
    Probe probe;
    Tensor<double> act = x;
    for (std::size_t i = 0; i + 1 < model.layer_count(); ++i) {
        Layer<double>& layer = model.layer(i);
        if (layer.kind() == "relu") {
            for (double v : act.values()) {
                probe.signature.push_back(v > 0.0);
                probe.min_relu_margin = std::min(probe.min_relu_margin, std::fabs(v));
            }
        } else if (layer.kind() == "maxpool") {
            const Shape& s = act.shape();
            const index_t B = s[0], C = s[1], H = s[2], W = s[3];
            for (index_t b = 0; b < B; ++b) {
                for (index_t c = 0; c < C; ++c) {
                    for (index_t yy = 0; yy < H; yy += 2) {
                        for (index_t xx = 0; xx < W; xx += 2) {
                            int best = 0;
                            double m1 = -1e300, m2 = -1e300;
                            for (int k = 0; k < 4; ++k) {
                                const double v = act(b, c, yy + k / 2, xx + k % 2);
                                if (v > m1) {
                                    m2 = m1;
                                    m1 = v;
                                    best = k;
                                } else if (v > m2) {
                                    m2 = v;
                                }
                            }
                            probe.signature.push_back(best);
                            if (m2 > 0.0) {
                                // only a positive runner-up can overtake; ties
                                // among relu-zeroed entries cannot reorder
                                probe.min_pool_gap = std::min(probe.min_pool_gap, m1 - m2);
                            }
                        }
                    }
                }
            }
        }
        act = layer.forward(act, Mode::train);
    }
    probe.loss = softmax_cross_entropy(act, y).mean_loss;
    return probe;
}

struct TrackedParam {
    std::size_t layer_index;
    Tensor<double>* values;
    const Tensor<double>* analytic; // refreshed per input batch
    index_t offset;
};

} // namespace

GradCheckReport gradcheck(const std::string& architecture, std::uint64_t seed, double tolerance) {
    GradCheckReport report;
    report.architecture = architecture;
    report.tolerance = tolerance;

    SequentialModel<double> model = architecture == "cnn" ? build_small_cnn<double>(seed)
                                    : architecture == "mlp"
                                        ? build_small_mlp<double>(seed)
                                        : throw ConfigError("gradcheck architecture must be mlp or "
                                                            "cnn, got " +
                                                            architecture);

    std::vector<TrackedParam> params;
    for (std::size_t li = 0; li < model.layer_count(); ++li) {
        if (ParamSet<double>* ps = model.layer(li).params()) {
            for (index_t i = 0; i < ps->weights.size(); ++i) {
                params.push_back({li, &ps->weights, &ps->grad_weights, i});
            }
            for (index_t i = 0; i < ps->bias.size(); ++i) {
                params.push_back({li, &ps->bias, &ps->grad_bias, i});
            }
        }
    }

    std::vector<char> validated(params.size(), 0);
    std::vector<double> err_of(params.size(), 0.0);
    std::size_t remaining = params.size();

    // A single input batch rarely keeps every probe on its linear region (a
    // near-kink unit invalidates every upstream parameter), so unvalidated
    // parameters are retried against fresh batches and coverage accumulates.
    const index_t batch = 4;
    Rng rng(derive_seed(seed, 7));
    for (int round = 0; round < kMaxInputBatches && remaining > 0; ++round) {
        Tensor<double> x = random_batch(model.input_shape(), batch, rng);
        Tensor<double> y = random_one_hot(batch, model.classes(), rng);
        Probe base = forward_probe(model, x, y);
        for (int attempt = 0;
             attempt < 64 && (base.min_relu_margin < 4 * kStep || base.min_pool_gap < 8 * kStep);
             ++attempt) {
            x = random_batch(model.input_shape(), batch, rng);
            base = forward_probe(model, x, y);
        }

        // analytic gradients for this batch, from the same train-mode forward
        LossResult<double> loss = softmax_cross_entropy(model.forward_logits(x, Mode::train), y);
        model.backward(loss.grad_logits);

        for (std::size_t p = 0; p < params.size(); ++p) {
            if (validated[p]) {
                continue;
            }
            double& value = (*params[p].values)(params[p].offset);
            const double orig = value;
            value = orig + kStep;
            const Probe plus = forward_probe(model, x, y);
            value = orig - kStep;
            const Probe minus = forward_probe(model, x, y);
            value = orig;
            if (plus.signature != base.signature || minus.signature != base.signature) {
                continue; // probe crossed a kink; retry on a later batch
            }
            const double numeric = (plus.loss - minus.loss) / (2.0 * kStep);
            err_of[p] = rel_err((*params[p].analytic)(params[p].offset), numeric);
            validated[p] = 1;
            --remaining;
        }
    }

    int ordinal_by_kind[2] = {0, 0};
    for (std::size_t li = 0; li < model.layer_count(); ++li) {
        Layer<double>& layer = model.layer(li);
        if (!layer.params()) {
            continue;
        }
        const int ordinal = ++ordinal_by_kind[layer.kind() == "dense" ? 0 : 1];
        GradCheckEntry entry;
        entry.layer = layer.kind() + std::to_string(ordinal);
        entry.params_checked = 0;
        entry.params_skipped = 0;
        entry.max_rel_err = 0.0;
        for (std::size_t p = 0; p < params.size(); ++p) {
            if (params[p].layer_index != li) {
                continue;
            }
            if (validated[p]) {
                ++entry.params_checked;
                entry.max_rel_err = std::max(entry.max_rel_err, err_of[p]);
            } else {
                ++entry.params_skipped;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.per_layer.push_back(std::move(entry));
    }

    // Parameters that never produced a kink-free probe stay uncompared; their
    // share must be marginal for the check to count as covering the model.
    const index_t skip_budget = std::max<index_t>(2, static_cast<index_t>(params.size()) / 50);
    report.skipped_within_budget = static_cast<index_t>(remaining) <= skip_budget;
    report.passed = report.max_rel_err < tolerance && report.skipped_within_budget;
    return report;
}

} // namespace tgocr
