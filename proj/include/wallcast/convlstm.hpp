#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace wallcast {

namespace detail {

// K=3 convolution with zero padding, accumulating into out.
// kern layout [c_out, c_in, 3].
inline void conv_k3_accum(double* out, const double* in, const double* kern,
                          std::size_t c_out, std::size_t c_in, std::size_t len) {
    for (std::size_t o = 0; o < c_out; ++o) {
        double* op = out + o * len;
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* ip = in + c * len;
            const double* kp = kern + (o * c_in + c) * 3;
            const double w0 = kp[0], w1 = kp[1], w2 = kp[2];
            op[0] += w1 * ip[0] + w2 * ip[1];
            for (std::size_t x = 1; x + 1 < len; ++x)
                op[x] += w0 * ip[x - 1] + w1 * ip[x] + w2 * ip[x + 1];
            op[len - 1] += w0 * ip[len - 2] + w1 * ip[len - 1];
        }
    }
}

// Adjoint of conv_k3_accum: accumulates d_in and d_kern from upstream.
inline void conv_k3_adjoint(const double* up, const double* in, const double* kern,
                            double* d_in, double* d_kern,
                            std::size_t c_out, std::size_t c_in, std::size_t len) {
    for (std::size_t o = 0; o < c_out; ++o) {
        const double* upo = up + o * len;
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* ip = in + c * len;
            const double* kp = kern + (o * c_in + c) * 3;
            double* dip = d_in ? d_in + c * len : nullptr;
            double* dkp = d_kern + (o * c_in + c) * 3;
            double k0 = 0.0, k1 = 0.0, k2 = 0.0;
            if (dip) {
                const double w0 = kp[0], w1 = kp[1], w2 = kp[2];
                for (std::size_t x = 0; x < len; ++x) {
                    const double u = upo[x];
                    if (x > 0) { k0 += u * ip[x - 1]; dip[x - 1] += w0 * u; }
                    k1 += u * ip[x];
                    dip[x] += w1 * u;
                    if (x + 1 < len) { k2 += u * ip[x + 1]; dip[x + 1] += w2 * u; }
                }
            } else {
                for (std::size_t x = 0; x < len; ++x) {
                    const double u = upo[x];
                    if (x > 0) k0 += u * ip[x - 1];
                    k1 += u * ip[x];
                    if (x + 1 < len) k2 += u * ip[x + 1];
                }
            }
            dkp[0] += k0;
            dkp[1] += k1;
            dkp[2] += k2;
        }
    }
}

} // namespace detail

// Gate order throughout: i, f, g, o.
struct ConvLstmLayerParams {
    std::size_t c_in = 0;
    std::size_t c_out = 0;
    Tensor wx; // [4, c_out, c_in, 3]
    Tensor wh; // [4, c_out, c_out, 3]
    Tensor b;  // [4, c_out]

    std::size_t param_count() const {
        return 4 * (3 * c_in * c_out + 3 * c_out * c_out + c_out);
    }
};

struct CellState {
    Tensor h; // [c_out, spatial]
    Tensor c; // [c_out, spatial]
};

struct ConvLstmStackParams {
    int resolution = 10;                 // window length t
    std::size_t spatial = 100;           // points along the wall
    std::vector<ConvLstmLayerParams> layers;
    Tensor head_w;                       // [spatial, c_last * spatial]
    Tensor head_b;                       // [spatial]
    double dropout_rate = 0.5;

    std::size_t head_param_count() const {
        return head_w.size() + head_b.size();
    }
    std::size_t param_count() const {
        std::size_t n = head_param_count();
        for (const auto& l : layers) n += l.param_count();
        return n;
    }
};

inline std::size_t count_params(const ConvLstmStackParams& p) { return p.param_count(); }

// Glorot-uniform weights, zero biases except forget-gate bias +1.
inline ConvLstmStackParams
make_convlstm_stack(int resolution, const std::vector<std::size_t>& channel_plan,
                    RngStream rng, std::size_t spatial = 100,
                    double dropout_rate = 0.5) {
    if (channel_plan.size() < 2)
        throw std::invalid_argument("make_convlstm_stack: need at least one layer");
    ConvLstmStackParams p;
    p.resolution = resolution;
    p.spatial = spatial;
    p.dropout_rate = dropout_rate;
    auto glorot = [&rng](Tensor& t, std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& e : t.v) e = (2.0 * rng.next_double() - 1.0) * limit;
    };
    for (std::size_t l = 0; l + 1 < channel_plan.size(); ++l) {
        ConvLstmLayerParams lp;
        lp.c_in = channel_plan[l];
        lp.c_out = channel_plan[l + 1];
        lp.wx = Tensor({4, lp.c_out, lp.c_in, 3});
        lp.wh = Tensor({4, lp.c_out, lp.c_out, 3});
        lp.b = Tensor({4, lp.c_out});
        glorot(lp.wx, 3 * lp.c_in, 3 * lp.c_out);
        glorot(lp.wh, 3 * lp.c_out, 3 * lp.c_out);
        for (std::size_t c = 0; c < lp.c_out; ++c) lp.b[1 * lp.c_out + c] = 1.0;
        p.layers.push_back(std::move(lp));
    }
    const std::size_t c_last = channel_plan.back();
    p.head_w = Tensor({spatial, c_last * spatial});
    p.head_b = Tensor({spatial});
    glorot(p.head_w, c_last * spatial, spatial);
    return p;
}

// ---------------------------------------------------------------------------
// Flat parameter vector (layer wx/wh/b in order, then head) for the
// optimizer and the finite-difference oracle.
// ---------------------------------------------------------------------------
inline std::vector<double> flatten_params(const ConvLstmStackParams& p) {
    std::vector<double> flat;
    flat.reserve(p.param_count());
    for (const auto& l : p.layers) {
        flat.insert(flat.end(), l.wx.v.begin(), l.wx.v.end());
        flat.insert(flat.end(), l.wh.v.begin(), l.wh.v.end());
        flat.insert(flat.end(), l.b.v.begin(), l.b.v.end());
    }
    flat.insert(flat.end(), p.head_w.v.begin(), p.head_w.v.end());
    flat.insert(flat.end(), p.head_b.v.begin(), p.head_b.v.end());
    return flat;
}

inline void unflatten_params(const std::vector<double>& flat, ConvLstmStackParams& p) {
    if (flat.size() != p.param_count())
        throw std::invalid_argument("unflatten_params: size mismatch");
    std::size_t off = 0;
    auto take = [&](Tensor& t) {
        std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.v.begin());
        off += t.size();
    };
    for (auto& l : p.layers) { take(l.wx); take(l.wh); take(l.b); }
    take(p.head_w);
    take(p.head_b);
}

// ---------------------------------------------------------------------------
// Single cell step (one layer, one time step).
// ---------------------------------------------------------------------------
struct CellStepCache {
    std::array<Tensor, 4> gate; // activated i, f, g, o
    Tensor c;                   // new cell state
    Tensor tanh_c;
    Tensor h;                   // new hidden state
};

inline CellState cell_step(const Tensor& x, const CellState& state,
                           const ConvLstmLayerParams& layer,
                           CellStepCache* cache = nullptr) {
    const std::size_t co = layer.c_out, ci = layer.c_in;
    if (x.shape.size() != 2 || x.shape[0] != ci)
        throw std::invalid_argument("cell_step: input shape mismatch");
    const std::size_t len = x.shape[1];
    if (state.h.shape != std::vector<std::size_t>{co, len})
        throw std::invalid_argument("cell_step: state shape mismatch");
    state.h.check_finite("cell_step state");

    const std::size_t gsz = co * len;
    std::array<Tensor, 4> pre;
    for (int g = 0; g < 4; ++g) {
        pre[g] = Tensor({co, len});
        double* p = pre[g].data();
        const double* bg = layer.b.data() + g * co;
        for (std::size_t c = 0; c < co; ++c)
            for (std::size_t s = 0; s < len; ++s) p[c * len + s] = bg[c];
        detail::conv_k3_accum(p, x.data(), layer.wx.data() + g * co * ci * 3, co, ci, len);
        detail::conv_k3_accum(p, state.h.data(), layer.wh.data() + g * co * co * 3,
                              co, co, len);
    }
    std::array<Tensor, 4> act;
    for (int g = 0; g < 4; ++g) {
        act[g] = Tensor({co, len});
        for (std::size_t i = 0; i < gsz; ++i)
            act[g][i] = (g == 2) ? std::tanh(pre[g][i]) : sigmoid(pre[g][i]);
    }
    CellState out;
    out.c = Tensor({co, len});
    out.h = Tensor({co, len});
    Tensor tc({co, len});
    for (std::size_t i = 0; i < gsz; ++i) {
        out.c[i] = act[1][i] * state.c[i] + act[0][i] * act[2][i];
        tc[i] = std::tanh(out.c[i]);
        out.h[i] = act[3][i] * tc[i];
    }
    if (cache) {
        cache->gate = act;
        cache->c = out.c;
        cache->tanh_c = tc;
        cache->h = out.h;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full-stack forward. Window is [t, spatial] (trailing feature dim of 1
// implicit). Each layer emits its hidden sequence; dropout follows every
// layer; the head reads the final layer's last-step hidden state.
// ---------------------------------------------------------------------------
struct LayerCache {
    std::vector<Tensor> x;          // per-step inputs [c_in, spatial]
    std::vector<CellStepCache> step;
    std::vector<Tensor> dropped;    // per-step hidden after dropout
    std::vector<Tensor> mask;       // per-step dropout masks
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Tensor flat_in;  // head input [c_last * spatial]
    Tensor pred;     // [spatial]
};

inline Tensor convlstm_forward(const ConvLstmStackParams& p, const Tensor& window,
                               bool training, RngStream& rng,
                               ForwardCache* cache = nullptr) {
    const std::size_t t = static_cast<std::size_t>(p.resolution);
    const std::size_t sp = p.spatial;
    bool shape_ok = (window.shape == std::vector<std::size_t>{t, sp}) ||
                    (window.shape == std::vector<std::size_t>{t, sp, 1});
    if (!shape_ok)
        throw std::invalid_argument("convlstm_forward: window shape " +
                                    shape_str(window.shape) + ", expected [" +
                                    std::to_string(t) + "," + std::to_string(sp) + "]");
    window.check_finite("convlstm_forward window");

    if (cache) cache->layers.assign(p.layers.size(), LayerCache{});

    // Current sequence flowing between layers, starts as the raw window.
    std::vector<Tensor> seq(t);
    for (std::size_t s = 0; s < t; ++s) {
        seq[s] = Tensor({1, sp});
        std::copy(window.v.begin() + s * sp, window.v.begin() + (s + 1) * sp,
                  seq[s].v.begin());
    }

    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& layer = p.layers[l];
        LayerCache* lc = cache ? &cache->layers[l] : nullptr;
        CellState state;
        state.h = Tensor({layer.c_out, sp});
        state.c = Tensor({layer.c_out, sp});
        std::vector<Tensor> out_seq(t);
        for (std::size_t s = 0; s < t; ++s) {
            CellStepCache sc;
            state = cell_step(seq[s], state, layer, lc ? &sc : nullptr);
            Tensor h = state.h;
            Tensor mask;
            if (training && p.dropout_rate > 0.0) {
                mask = dropout_mask(h.shape, p.dropout_rate, rng);
                for (std::size_t i = 0; i < h.size(); ++i) h[i] *= mask[i];
            }
            if (lc) {
                lc->x.push_back(seq[s]);
                lc->step.push_back(std::move(sc));
                lc->mask.push_back(std::move(mask));
                lc->dropped.push_back(h);
            }
            out_seq[s] = std::move(h);
        }
        seq = std::move(out_seq);
    }

    const std::size_t c_last = p.layers.back().c_out;
    Tensor flat({c_last * sp});
    flat.v = seq.back().v; // [c_last, spatial] row-major
    Tensor pred = dense_forward(flat, p.head_w, p.head_b);
    if (cache) {
        cache->flat_in = flat;
        cache->pred = pred;
    }
    return pred;
}

// ---------------------------------------------------------------------------
// BPTT. d_pred is the loss gradient wrt the prediction; returns the flat
// gradient vector in flatten_params order, accumulated into `grad`.
// ---------------------------------------------------------------------------
inline void convlstm_backward(const ConvLstmStackParams& p, const ForwardCache& cache,
                              const Tensor& d_pred, std::vector<double>& grad) {
    const std::size_t t = static_cast<std::size_t>(p.resolution);
    const std::size_t sp = p.spatial;
    if (grad.size() != p.param_count())
        throw std::invalid_argument("convlstm_backward: grad size mismatch");

    // Head.
    auto [d_flat, d_hw, d_hb] = dense_grad(d_pred, cache.flat_in, p.head_w);
    {
        std::size_t off = grad.size() - p.head_param_count();
        for (std::size_t i = 0; i < d_hw.size(); ++i) grad[off + i] += d_hw[i];
        off += d_hw.size();
        for (std::size_t i = 0; i < d_hb.size(); ++i) grad[off + i] += d_hb[i];
    }

    // Gradient wrt each layer's dropped output sequence; top layer only
    // receives signal at the last step.
    const std::size_t c_last = p.layers.back().c_out;
    std::vector<Tensor> d_out(t);
    for (std::size_t s = 0; s < t; ++s) d_out[s] = Tensor({0});
    Tensor d_last({c_last, sp});
    d_last.v = d_flat.v;
    d_out[t - 1] = std::move(d_last);

    // Parameter offsets per layer in the flat vector.
    std::vector<std::size_t> layer_off(p.layers.size());
    {
        std::size_t off = 0;
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            layer_off[l] = off;
            off += p.layers[l].param_count();
        }
    }

    for (std::size_t li = p.layers.size(); li-- > 0;) {
        const auto& layer = p.layers[li];
        const LayerCache& lc = cache.layers[li];
        const std::size_t co = layer.c_out, ci = layer.c_in;
        const std::size_t gsz = co * sp;

        Tensor d_wx({4, co, ci, 3});
        Tensor d_wh({4, co, co, 3});
        Tensor d_b({4, co});
        std::vector<Tensor> d_x(t);
        for (std::size_t s = 0; s < t; ++s) d_x[s] = Tensor({ci, sp});

        Tensor d_h_rec({co, sp}); // from step s+1 via recurrent kernels
        Tensor d_c_next({co, sp});
        std::array<Tensor, 4> d_pre;
        for (int g = 0; g < 4; ++g) d_pre[g] = Tensor({co, sp});

        for (std::size_t s = t; s-- > 0;) {
            const CellStepCache& sc = lc.step[s];
            // External signal through this step's dropout mask.
            Tensor d_h = d_h_rec;
            if (d_out[s].size() == gsz) {
                if (lc.mask[s].size() == gsz)
                    for (std::size_t i = 0; i < gsz; ++i)
                        d_h[i] += d_out[s][i] * lc.mask[s][i];
                else
                    for (std::size_t i = 0; i < gsz; ++i) d_h[i] += d_out[s][i];
            }
            const double* c_prev = (s > 0) ? lc.step[s - 1].c.data() : nullptr;
            for (std::size_t i = 0; i < gsz; ++i) {
                const double iv = sc.gate[0][i], fv = sc.gate[1][i];
                const double gv = sc.gate[2][i], ov = sc.gate[3][i];
                const double tc = sc.tanh_c[i];
                const double d_o = d_h[i] * tc;
                const double d_c = d_c_next[i] + d_h[i] * ov * (1.0 - tc * tc);
                const double cp = c_prev ? c_prev[i] : 0.0;
                d_pre[0][i] = d_c * gv * iv * (1.0 - iv);
                d_pre[1][i] = d_c * cp * fv * (1.0 - fv);
                d_pre[2][i] = d_c * iv * (1.0 - gv * gv);
                d_pre[3][i] = d_o * ov * (1.0 - ov);
                d_c_next[i] = d_c * fv;
            }
            d_h_rec.fill(0.0);
            const double* h_prev = (s > 0) ? lc.step[s - 1].h.data() : nullptr;
            for (int g = 0; g < 4; ++g) {
                const double* up = d_pre[g].data();
                // Bias.
                for (std::size_t c = 0; c < co; ++c) {
                    double acc = 0.0;
                    const double* row = up + c * sp;
                    for (std::size_t x = 0; x < sp; ++x) acc += row[x];
                    d_b[g * co + c] += acc;
                }
                detail::conv_k3_adjoint(up, lc.x[s].data(),
                                        layer.wx.data() + g * co * ci * 3,
                                        d_x[s].data(), d_wx.data() + g * co * ci * 3,
                                        co, ci, sp);
                if (h_prev) {
                    detail::conv_k3_adjoint(up, h_prev,
                                            layer.wh.data() + g * co * co * 3,
                                            d_h_rec.data(),
                                            d_wh.data() + g * co * co * 3, co, co, sp);
                } else {
                    // H_{-1} = 0: kernel gradient vanishes, no input gradient.
                }
            }
        }

        std::size_t off = layer_off[li];
        for (std::size_t i = 0; i < d_wx.size(); ++i) grad[off + i] += d_wx[i];
        off += d_wx.size();
        for (std::size_t i = 0; i < d_wh.size(); ++i) grad[off + i] += d_wh[i];
        off += d_wh.size();
        for (std::size_t i = 0; i < d_b.size(); ++i) grad[off + i] += d_b[i];

        // Pass to the layer below, through its dropout mask there.
        if (li > 0) d_out = std::move(d_x);
    }
}

// ---------------------------------------------------------------------------
// Single-step supervised training: minibatch Adam on MSE, early stopping
// on validation loss, best-epoch weights returned.
// ---------------------------------------------------------------------------
struct TrainConfig {
    double lr = 0.001;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
};

struct EpochStats {
    std::size_t epoch;
    double train_mse;
    double val_mse;
};

using SupervisedSet = std::vector<std::pair<Tensor, Tensor>>; // (window, target)

inline double eval_mse(const ConvLstmStackParams& p, const SupervisedSet& set) {
    if (set.empty()) return 0.0;
    RngStream dummy;
    double acc = 0.0;
    for (const auto& [w, y] : set)
        acc += mse(convlstm_forward(p, w, false, dummy), y);
    return acc / static_cast<double>(set.size());
}

inline std::vector<EpochStats>
train_single_step(ConvLstmStackParams& p, const SupervisedSet& train,
                  const SupervisedSet& val, const TrainConfig& cfg) {
    if (cfg.max_epochs == 0) return {};
    if (train.empty()) throw std::invalid_argument("train_single_step: empty dataset");
    if (!(cfg.lr > 0.0) || cfg.batch_size < 1)
        throw std::invalid_argument("train_single_step: bad config");

    std::vector<double> flat = flatten_params(p);
    AdamState adam(flat.size(), cfg.lr);
    RngStream root(cfg.seed, 0x7261696e);

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<EpochStats> history;
    std::vector<double> best = flat;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::vector<double> grad(flat.size());
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        RngStream shuffle_rng = root.substream(2 * epoch);
        RngStream drop_rng = root.substream(2 * epoch + 1);
        shuffle_rng.shuffle(order);

        double train_acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv_n = 1.0 / static_cast<double>(end - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& [w, y] = train[order[i]];
                Tensor pred = convlstm_forward(p, w, true, drop_rng, &cache);
                batch_loss += mse(pred, y);
                Tensor d_pred = mse_grad(pred, y);
                for (double& e : d_pred.v) e *= inv_n;
                convlstm_backward(p, cache, d_pred, grad);
            }
            batch_loss *= inv_n;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_single_step: loss diverged at epoch " +
                                         std::to_string(epoch));
            train_acc += batch_loss * static_cast<double>(end - start);
            adam_update(flat, grad, adam);
            unflatten_params(flat, p);
        }
        const double train_mse = train_acc / static_cast<double>(order.size());
        const double val_mse = val.empty() ? train_mse : eval_mse(p, val);
        history.push_back({epoch, train_mse, val_mse});

        if (val_mse < best_val) {
            best_val = val_mse;
            best = flat;
            since_best = 0;
        } else if (++since_best > cfg.patience) {
            break;
        }
    }
    unflatten_params(best, p);
    return history;
}

} // namespace wallcast
