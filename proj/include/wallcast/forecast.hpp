#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "convlstm.hpp"
#include "tensor.hpp"

namespace wallcast {

struct RolloutResult {
    std::string model_id;
    int horizon = 0;
    Tensor predictions; // [horizon, spatial], meters
    Tensor seed_window; // [t, spatial], the history tail actually used
};

// Recursive multi-step rollout: each one-step prediction is appended to
// the input window for the next step. Inference mode only.
inline RolloutResult rollout(const ConvLstmStackParams& model, const Tensor& history,
                             int horizon, const std::string& model_id = "") {
    if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
    if (history.shape.size() != 2 || history.shape[1] != model.spatial)
        throw std::invalid_argument("rollout: history must be [n, spatial]");
    const std::size_t t = static_cast<std::size_t>(model.resolution);
    const std::size_t sp = model.spatial;
    if (history.shape[0] < t)
        throw std::invalid_argument("rollout: history of " +
                                    std::to_string(history.shape[0]) +
                                    " profiles is shorter than resolution " +
                                    std::to_string(t));

    RolloutResult out;
    out.model_id = model_id;
    out.horizon = horizon;
    out.predictions = Tensor({static_cast<std::size_t>(horizon), sp});
    out.seed_window = Tensor({t, sp});
    std::copy(history.v.end() - t * sp, history.v.end(), out.seed_window.v.begin());

    Tensor window = out.seed_window;
    RngStream dummy;
    for (int k = 0; k < horizon; ++k) {
        const Tensor pred = convlstm_forward(model, window, false, dummy);
        std::copy(pred.v.begin(), pred.v.end(), out.predictions.v.begin() + k * sp);
        // Shift the window one step and append the prediction.
        std::copy(window.v.begin() + sp, window.v.end(), window.v.begin());
        std::copy(pred.v.begin(), pred.v.end(), window.v.end() - sp);
    }
    return out;
}

// Independent rollouts of resolution-keyed models over a shared history;
// errors never cross models.
inline std::map<std::string, RolloutResult>
multi_rollout(const std::map<std::string, const ConvLstmStackParams*>& models,
              const Tensor& history, int horizon = 10) {
    std::map<std::string, RolloutResult> out;
    for (const auto& [id, model] : models) {
        try {
            out[id] = rollout(*model, history, horizon, id);
        } catch (const std::exception& e) {
            throw std::runtime_error("multi_rollout[" + id + "]: " + e.what());
        }
    }
    return out;
}

} // namespace wallcast
