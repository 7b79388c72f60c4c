#pragma once

#include <array>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "forecast.hpp"
#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace wallcast {

// ---------------------------------------------------------------------------
// Stacking meta-learner: deep fully connected net mapping the three base
// predictions at one (step, point) to a refined displacement value.
// Leaky ReLU on hidden layers, linear output, dropout after each hidden
// layer at train time.
// ---------------------------------------------------------------------------
struct MetaDenseLayer {
    Tensor w; // [out, in]
    Tensor b; // [out]
};

struct MetaNetParams {
    std::vector<std::size_t> plan; // unit counts incl. input and output
    std::vector<MetaDenseLayer> layers;
    double leaky_alpha = 0.3;
    double dropout_rate = 0.5;

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

inline const std::vector<std::size_t>& default_meta_plan() {
    static const std::vector<std::size_t> plan = {3, 512, 512, 256, 256,
                                                  128, 128, 64, 64, 1};
    return plan;
}

inline std::size_t count_meta_params(const MetaNetParams& p) { return p.param_count(); }

inline MetaNetParams make_meta_net(const std::vector<std::size_t>& plan,
                                   RngStream rng, double dropout_rate = 0.5,
                                   double leaky_alpha = 0.3) {
    if (plan.size() < 2) throw std::invalid_argument("make_meta_net: bad plan");
    MetaNetParams p;
    p.plan = plan;
    p.dropout_rate = dropout_rate;
    p.leaky_alpha = leaky_alpha;
    for (std::size_t i = 0; i + 1 < plan.size(); ++i) {
        MetaDenseLayer l;
        l.w = Tensor({plan[i + 1], plan[i]});
        l.b = Tensor({plan[i + 1]});
        const double limit = std::sqrt(6.0 / static_cast<double>(plan[i] + plan[i + 1]));
        for (double& e : l.w.v) e = (2.0 * rng.next_double() - 1.0) * limit;
        p.layers.push_back(std::move(l));
    }
    return p;
}

inline std::vector<double> flatten_meta(const MetaNetParams& p) {
    std::vector<double> flat;
    flat.reserve(p.param_count());
    for (const auto& l : p.layers) {
        flat.insert(flat.end(), l.w.v.begin(), l.w.v.end());
        flat.insert(flat.end(), l.b.v.begin(), l.b.v.end());
    }
    return flat;
}

inline void unflatten_meta(const std::vector<double>& flat, MetaNetParams& p) {
    if (flat.size() != p.param_count())
        throw std::invalid_argument("unflatten_meta: size mismatch");
    std::size_t off = 0;
    for (auto& l : p.layers) {
        std::copy(flat.begin() + off, flat.begin() + off + l.w.size(), l.w.v.begin());
        off += l.w.size();
        std::copy(flat.begin() + off, flat.begin() + off + l.b.size(), l.b.v.begin());
        off += l.b.size();
    }
}

struct MetaCache {
    std::vector<Tensor> input; // activation entering each layer
    std::vector<Tensor> pre;   // pre-activation of each layer
    std::vector<Tensor> mask;  // dropout masks on hidden outputs
};

inline double meta_forward(const MetaNetParams& p, const std::array<double, 3>& x,
                           bool training = false, RngStream* rng = nullptr,
                           MetaCache* cache = nullptr) {
    if (p.plan.front() != 3)
        throw std::invalid_argument("meta_forward: net does not take 3 inputs");
    Tensor a({3}, std::vector<double>{x[0], x[1], x[2]});
    if (cache) {
        cache->input.clear();
        cache->pre.clear();
        cache->mask.clear();
    }
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const bool hidden = i + 1 < p.layers.size();
        if (cache) cache->input.push_back(a);
        Tensor z = dense_forward(a, p.layers[i].w, p.layers[i].b);
        if (cache) cache->pre.push_back(z);
        if (hidden) {
            for (double& e : z.v)
                if (e < 0.0) e *= p.leaky_alpha;
            if (training && p.dropout_rate > 0.0) {
                Tensor m = dropout_mask(z.shape, p.dropout_rate, *rng);
                for (std::size_t j = 0; j < z.size(); ++j) z[j] *= m[j];
                if (cache) cache->mask.push_back(std::move(m));
            } else if (cache) {
                cache->mask.push_back(Tensor({0}));
            }
        }
        a = std::move(z);
    }
    const double out = a[0];
    if (!std::isfinite(out)) throw std::runtime_error("meta_forward: non-finite output");
    return out;
}

// Accumulates parameter gradients into grad (flatten_meta order).
inline void meta_backward(const MetaNetParams& p, const MetaCache& cache,
                          double d_out, std::vector<double>& grad) {
    if (grad.size() != p.param_count())
        throw std::invalid_argument("meta_backward: grad size mismatch");
    std::vector<std::size_t> off(p.layers.size());
    {
        std::size_t o = 0;
        for (std::size_t i = 0; i < p.layers.size(); ++i) {
            off[i] = o;
            o += p.layers[i].w.size() + p.layers[i].b.size();
        }
    }
    Tensor d_a({1}, std::vector<double>{d_out});
    for (std::size_t li = p.layers.size(); li-- > 0;) {
        const bool hidden = li + 1 < p.layers.size();
        Tensor d_z = d_a;
        if (hidden) {
            const Tensor& m = cache.mask[li];
            if (m.size() == d_z.size())
                for (std::size_t j = 0; j < d_z.size(); ++j) d_z[j] *= m[j];
            for (std::size_t j = 0; j < d_z.size(); ++j)
                if (cache.pre[li][j] < 0.0) d_z[j] *= p.leaky_alpha;
        }
        auto [dx, dw, db] = dense_grad(d_z, cache.input[li], p.layers[li].w);
        double* g = grad.data() + off[li];
        for (std::size_t j = 0; j < dw.size(); ++j) g[j] += dw[j];
        g += dw.size();
        for (std::size_t j = 0; j < db.size(); ++j) g[j] += db[j];
        d_a = std::move(dx);
    }
}

// ---------------------------------------------------------------------------
// Stacking dataset: one sample per (sequence, step, point).
// ---------------------------------------------------------------------------
struct StackingSample {
    std::array<double, 3> x; // base predictions A, B, C (meters)
    double y;                // ground truth (meters)
    int step;                // 1..horizon
    int point;               // 0..spatial-1
    std::size_t sequence;
};

inline std::vector<StackingSample>
build_stacking_dataset(const std::vector<std::map<std::string, RolloutResult>>& rollouts,
                       const std::vector<Tensor>& truths) {
    if (rollouts.size() != truths.size())
        throw std::invalid_argument("build_stacking_dataset: rollout/truth count mismatch");
    std::vector<StackingSample> samples;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        if (rollouts[i].size() != 3)
            throw std::invalid_argument("build_stacking_dataset: need 3 base models");
        std::array<const RolloutResult*, 3> rr{};
        std::size_t k = 0;
        for (const auto& [id, r] : rollouts[i]) rr[k++] = &r;
        const std::size_t h = static_cast<std::size_t>(rr[0]->horizon);
        const std::size_t sp = rr[0]->predictions.shape[1];
        if (truths[i].shape != std::vector<std::size_t>{h, sp})
            throw std::invalid_argument("build_stacking_dataset: truth " +
                                        std::to_string(i) + " misaligned, got " +
                                        shape_str(truths[i].shape));
        for (std::size_t s = 0; s < h; ++s)
            for (std::size_t j = 0; j < sp; ++j) {
                StackingSample smp;
                smp.x = {rr[0]->predictions[s * sp + j], rr[1]->predictions[s * sp + j],
                         rr[2]->predictions[s * sp + j]};
                smp.y = truths[i][s * sp + j];
                smp.step = static_cast<int>(s) + 1;
                smp.point = static_cast<int>(j);
                smp.sequence = i;
                samples.push_back(smp);
            }
    }
    return samples;
}

// ---------------------------------------------------------------------------
// Meta-learner training: minibatch Adam on MSE with a 10% held-out early
// stopping set; best-epoch weights returned.
// ---------------------------------------------------------------------------
struct MetaTrainConfig {
    double lr = 0.001;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct MetaEpochStats {
    std::size_t epoch;
    double train_mse;
    double holdout_mse;
};

inline double eval_meta_mse(const MetaNetParams& p,
                            const std::vector<StackingSample>& set) {
    if (set.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : set) {
        const double d = meta_forward(p, s.x) - s.y;
        acc += d * d;
    }
    return acc / static_cast<double>(set.size());
}

inline std::vector<MetaEpochStats>
train_meta(MetaNetParams& p, const std::vector<StackingSample>& samples,
           const MetaTrainConfig& cfg) {
    if (cfg.max_epochs == 0) return {};
    if (samples.empty()) throw std::invalid_argument("train_meta: empty sample set");

    RngStream root(cfg.seed, 0x6d657461);
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream holdout_rng = root.substream(0xff);
    holdout_rng.shuffle(order);
    const std::size_t n_hold =
        std::min(samples.size() - 1,
                 static_cast<std::size_t>(std::llround(
                     static_cast<double>(samples.size()) * cfg.holdout_fraction)));
    std::vector<StackingSample> hold, train;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_hold ? hold : train).push_back(samples[order[i]]);

    std::vector<double> flat = flatten_meta(p);
    AdamState adam(flat.size(), cfg.lr);
    std::vector<double> grad(flat.size());
    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    std::vector<MetaEpochStats> history;
    std::vector<double> best = flat;
    double best_hold = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    MetaCache cache;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        RngStream shuffle_rng = root.substream(2 * epoch);
        RngStream drop_rng = root.substream(2 * epoch + 1);
        shuffle_rng.shuffle(idx);

        double train_acc = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(idx.size(), start + cfg.batch_size);
            const double inv_n = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = train[idx[i]];
                const double pred = meta_forward(p, s.x, true, &drop_rng, &cache);
                const double err = pred - s.y;
                batch_loss += err * err;
                meta_backward(p, cache, 2.0 * err * inv_n, grad);
            }
            batch_loss *= inv_n;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_meta: loss diverged at epoch " +
                                         std::to_string(epoch));
            train_acc += batch_loss * static_cast<double>(end - start);
            adam_update(flat, grad, adam);
            unflatten_meta(flat, p);
        }
        const double train_mse = train_acc / static_cast<double>(idx.size());
        const double hold_mse = hold.empty() ? train_mse : eval_meta_mse(p, hold);
        history.push_back({epoch, train_mse, hold_mse});
        if (hold_mse < best_hold) {
            best_hold = hold_mse;
            best = flat;
            since_best = 0;
        } else if (++since_best > cfg.patience) {
            break;
        }
    }
    unflatten_meta(best, p);
    return history;
}

// Pointwise ensemble refinement of three aligned rollouts.
inline Tensor ensemble_predict(const MetaNetParams& meta,
                               const std::map<std::string, RolloutResult>& rollouts) {
    if (rollouts.size() != 3)
        throw std::invalid_argument("ensemble_predict: need exactly 3 rollouts");
    std::array<const RolloutResult*, 3> rr{};
    std::size_t k = 0;
    for (const auto& [id, r] : rollouts) rr[k++] = &r;
    const auto shape = rr[0]->predictions.shape;
    for (const auto* r : rr)
        if (r->predictions.shape != shape)
            throw std::invalid_argument("ensemble_predict: mismatched rollout shapes");
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = meta_forward(
            meta, {rr[0]->predictions[i], rr[1]->predictions[i], rr[2]->predictions[i]});
    return out;
}

} // namespace wallcast
