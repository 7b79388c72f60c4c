#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tensor.hpp"

namespace wallcast {

inline double mae(const Tensor& pred, const Tensor& obs) {
    if (!pred.same_shape(obs)) throw std::invalid_argument("mae: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - obs[i]);
    return acc / static_cast<double>(pred.size());
}

// Coefficient of determination against the observation mean; negative when
// the prediction is worse than the mean.
inline double r2(const Tensor& pred, const Tensor& obs) {
    if (!pred.same_shape(obs)) throw std::invalid_argument("r2: shape mismatch");
    double mean = 0.0;
    for (double o : obs.v) mean += o;
    mean /= static_cast<double>(obs.size());
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        sse += (obs[i] - pred[i]) * (obs[i] - pred[i]);
        sst += (obs[i] - mean) * (obs[i] - mean);
    }
    if (sst <= 0.0) throw std::invalid_argument("r2: constant observations");
    return 1.0 - sse / sst;
}

// Willmott's index of agreement.
inline double ioa(const Tensor& pred, const Tensor& obs) {
    if (!pred.same_shape(obs)) throw std::invalid_argument("ioa: shape mismatch");
    double mean = 0.0;
    for (double o : obs.v) mean += o;
    mean /= static_cast<double>(obs.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        num += (obs[i] - pred[i]) * (obs[i] - pred[i]);
        const double d = std::abs(pred[i] - mean) + std::abs(obs[i] - mean);
        den += d * d;
    }
    if (den <= 0.0) {
        if (num == 0.0) return 1.0; // identical constants
        throw std::invalid_argument("ioa: zero denominator");
    }
    return 1.0 - num / den;
}

struct StepMetrics {
    int step = 0;        // 1-based prediction step
    double mean_mae = 0.0;
    double mean_r2 = 0.0;
    double mean_ioa = 0.0;
    std::size_t sequences = 0;
};

// Per-(sequence, step) metrics over the spatial profile, averaged over
// sequences per step. predictions[i] and truths[i] are [steps, spatial].
inline std::vector<StepMetrics>
stepwise_eval(const std::vector<Tensor>& predictions, const std::vector<Tensor>& truths,
              int steps = 10) {
    if (predictions.empty() || predictions.size() != truths.size())
        throw std::invalid_argument("stepwise_eval: no sequences or count mismatch");
    std::vector<StepMetrics> out(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) out[s].step = s + 1;

    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const Tensor& p = predictions[i];
        const Tensor& o = truths[i];
        if (p.shape != o.shape || p.shape.size() != 2 ||
            p.shape[0] < static_cast<std::size_t>(steps))
            throw std::invalid_argument("stepwise_eval: sequence " + std::to_string(i) +
                                        " shape mismatch");
        const std::size_t sp = p.shape[1];
        for (int s = 0; s < steps; ++s) {
            Tensor pr({sp}), ob({sp});
            std::copy(p.v.begin() + s * sp, p.v.begin() + (s + 1) * sp, pr.v.begin());
            std::copy(o.v.begin() + s * sp, o.v.begin() + (s + 1) * sp, ob.v.begin());
            out[s].mean_mae += mae(pr, ob);
            out[s].mean_r2 += r2(pr, ob);
            out[s].mean_ioa += ioa(pr, ob);
            out[s].sequences += 1;
        }
    }
    const double inv = 1.0 / static_cast<double>(predictions.size());
    for (auto& m : out) {
        m.mean_mae *= inv;
        m.mean_r2 *= inv;
        m.mean_ioa *= inv;
    }
    return out;
}

} // namespace wallcast
