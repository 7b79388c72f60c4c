#pragma once

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <tuple>

#include "rng.hpp"
#include "tensor.hpp"

namespace wallcast {

// ---------------------------------------------------------------------------
// 1-D convolution with zero ("same") padding. input [C_in, L],
// kernels [C_out, C_in, K] with K odd, bias [C_out] -> [C_out, L].
// ---------------------------------------------------------------------------
inline Tensor conv1d_same(const Tensor& input, const Tensor& kernels,
                          const Tensor& bias) {
    if (input.shape.size() != 2 || kernels.shape.size() != 3 || bias.shape.size() != 1)
        throw std::invalid_argument("conv1d_same: expected ranks 2/3/1");
    const std::size_t c_in = input.shape[0], len = input.shape[1];
    const std::size_t c_out = kernels.shape[0], k = kernels.shape[2];
    if (kernels.shape[1] != c_in || bias.shape[0] != c_out)
        throw std::invalid_argument("conv1d_same: shape mismatch, input " +
                                    shape_str(input.shape) + " kernels " +
                                    shape_str(kernels.shape));
    if (k % 2 == 0) throw std::invalid_argument("conv1d_same: kernel size must be odd");
    input.check_finite("conv1d_same input");

    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    Tensor out({c_out, len});
    for (std::size_t o = 0; o < c_out; ++o) {
        double* op = out.data() + o * len;
        const double b = bias[o];
        for (std::size_t x = 0; x < len; ++x) op[x] = b;
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* ip = input.data() + c * len;
            const double* kp = kernels.data() + (o * c_in + c) * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - half;
                const double w = kp[kk];
                const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
                const std::size_t hi =
                    off > 0 ? len - static_cast<std::size_t>(off) : len;
                for (std::size_t x = lo; x < hi; ++x)
                    op[x] += w * ip[x + off];
            }
        }
    }
    return out;
}

// Adjoint of conv1d_same. upstream [C_out, L] -> (d_input, d_kernels, d_bias).
inline std::tuple<Tensor, Tensor, Tensor>
conv1d_same_grad(const Tensor& upstream, const Tensor& input, const Tensor& kernels) {
    const std::size_t c_in = input.shape[0], len = input.shape[1];
    const std::size_t c_out = kernels.shape[0], k = kernels.shape[2];
    if (upstream.shape != std::vector<std::size_t>{c_out, len} ||
        kernels.shape[1] != c_in)
        throw std::invalid_argument("conv1d_same_grad: shape mismatch");

    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
    Tensor d_input({c_in, len});
    Tensor d_kernels({c_out, c_in, k});
    Tensor d_bias({c_out});
    for (std::size_t o = 0; o < c_out; ++o) {
        const double* up = upstream.data() + o * len;
        double acc = 0.0;
        for (std::size_t x = 0; x < len; ++x) acc += up[x];
        d_bias[o] = acc;
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* ip = input.data() + c * len;
            double* dip = d_input.data() + c * len;
            const double* kp = kernels.data() + (o * c_in + c) * k;
            double* dkp = d_kernels.data() + (o * c_in + c) * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - half;
                const std::size_t lo = off < 0 ? static_cast<std::size_t>(-off) : 0;
                const std::size_t hi =
                    off > 0 ? len - static_cast<std::size_t>(off) : len;
                const double w = kp[kk];
                double kacc = 0.0;
                for (std::size_t x = lo; x < hi; ++x) {
                    kacc += up[x] * ip[x + off];
                    dip[x + off] += w * up[x];
                }
                dkp[kk] = kacc;
            }
        }
    }
    return {std::move(d_input), std::move(d_kernels), std::move(d_bias)};
}

// ---------------------------------------------------------------------------
// Elementwise activations.
// ---------------------------------------------------------------------------
enum class Act { Tanh, Sigmoid, LeakyRelu, Linear };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double activate_scalar(Act kind, double x, double alpha = 0.3) {
    switch (kind) {
        case Act::Tanh: return std::tanh(x);
        case Act::Sigmoid: return sigmoid(x);
        case Act::LeakyRelu: return x >= 0.0 ? x : alpha * x;
        case Act::Linear: return x;
    }
    throw std::invalid_argument("activation: unknown kind");
}

inline Tensor activation(Act kind, const Tensor& x, double alpha = 0.3) {
    x.check_finite("activation input");
    Tensor y = x;
    for (double& e : y.v) e = activate_scalar(kind, e, alpha);
    return y;
}

// Gradient wrt x; expressed in terms of the pre-activation x.
inline Tensor activation_grad(Act kind, const Tensor& x, const Tensor& upstream,
                              double alpha = 0.3) {
    if (!x.same_shape(upstream))
        throw std::invalid_argument("activation_grad: shape mismatch");
    Tensor g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double d;
        switch (kind) {
            case Act::Tanh: {
                const double t = std::tanh(x[i]);
                d = 1.0 - t * t;
                break;
            }
            case Act::Sigmoid: {
                const double s = sigmoid(x[i]);
                d = s * (1.0 - s);
                break;
            }
            case Act::LeakyRelu: d = x[i] >= 0.0 ? 1.0 : alpha; break;
            case Act::Linear: d = 1.0; break;
            default: throw std::invalid_argument("activation_grad: unknown kind");
        }
        g[i] *= d;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Dense layer: y = Wx + b, W [D_out, D_in].
// ---------------------------------------------------------------------------
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape.size() != 1 || w.shape.size() != 2 || b.shape.size() != 1)
        throw std::invalid_argument("dense_forward: expected ranks 1/2/1");
    const std::size_t d_in = x.shape[0], d_out = w.shape[0];
    if (w.shape[1] != d_in || b.shape[0] != d_out)
        throw std::invalid_argument("dense_forward: dimension mismatch");
    Tensor y({d_out});
    for (std::size_t o = 0; o < d_out; ++o) {
        const double* wp = w.data() + o * d_in;
        double acc = b[o];
        for (std::size_t i = 0; i < d_in; ++i) acc += wp[i] * x[i];
        y[o] = acc;
    }
    return y;
}

inline std::tuple<Tensor, Tensor, Tensor>
dense_grad(const Tensor& upstream, const Tensor& x, const Tensor& w) {
    const std::size_t d_in = x.shape[0], d_out = w.shape[0];
    if (upstream.shape != std::vector<std::size_t>{d_out})
        throw std::invalid_argument("dense_grad: dimension mismatch");
    Tensor dx({d_in}), dw({d_out, d_in}), db({d_out});
    for (std::size_t o = 0; o < d_out; ++o) {
        const double u = upstream[o];
        db[o] = u;
        const double* wp = w.data() + o * d_in;
        double* dwp = dw.data() + o * d_in;
        for (std::size_t i = 0; i < d_in; ++i) {
            dwp[i] = u * x[i];
            dx[i] += u * wp[i];
        }
    }
    return {std::move(dx), std::move(dw), std::move(db)};
}

// ---------------------------------------------------------------------------
// Inverted dropout: survivors scaled by 1/(1-rate) at train time,
// exact identity at inference.
// ---------------------------------------------------------------------------
inline Tensor dropout(const Tensor& x, double rate, bool training, RngStream& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) return x;
    Tensor y = x;
    const double scale = 1.0 / (1.0 - rate);
    for (double& e : y.v) e = rng.next_double() < rate ? 0.0 : e * scale;
    return y;
}

// Mask variant used where the backward pass must reuse the same mask.
// mask entries are 0 or 1/(1-rate).
inline Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate,
                           RngStream& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("dropout_mask: rate must be in [0,1)");
    Tensor m(shape, 1.0);
    if (rate == 0.0) return m;
    const double scale = 1.0 / (1.0 - rate);
    for (double& e : m.v) e = rng.next_double() < rate ? 0.0 : scale;
    return m;
}

// ---------------------------------------------------------------------------
// Mean squared error over all elements.
// ---------------------------------------------------------------------------
inline double mse(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

inline Tensor mse_grad(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("mse_grad: shape mismatch");
    Tensor g = pred;
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. State accumulators shape-match the flat
// parameter vector; step strictly increases by one per update.
// ---------------------------------------------------------------------------
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t n = 0, double learning_rate = 0.001)
        : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

inline void adam_update(std::vector<double>& params, const std::vector<double>& grads,
                        AdamState& st) {
    if (params.size() != grads.size() || st.m.size() != params.size())
        throw std::invalid_argument("adam_update: size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("adam_update: non-finite gradient at index " +
                                     std::to_string(i));
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.epsilon);
    }
}

// ---------------------------------------------------------------------------
// Central finite differences, the gradient oracle used throughout the tests.
// ---------------------------------------------------------------------------
inline std::vector<double>
finite_difference_grad(const std::function<double(const std::vector<double>&)>& loss_fn,
                       const std::vector<double>& params, double step = 1e-5) {
    std::vector<double> g(params.size());
    std::vector<double> p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + step;
        const double up = loss_fn(p);
        p[i] = saved - step;
        const double down = loss_fn(p);
        p[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

} // namespace wallcast
