#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ensemble.hpp"
#include "rng.hpp"

namespace wallcast {

using TernaryFn = std::function<double(const std::array<double, 3>&)>;

struct ShapRecord {
    std::array<double, 3> x;
    std::array<double, 3> phi;
    double baseline; // mean f over the background set
    double fx;
};

// Exact Shapley values by enumerating all 8 coalitions, with interventional
// feature replacement against an empirical background.
inline ShapRecord exact_shapley(const TernaryFn& f, const std::array<double, 3>& x,
                                const std::vector<std::array<double, 3>>& background) {
    if (background.empty())
        throw std::invalid_argument("exact_shapley: empty background");

    // v[mask]: mean over background rows of f with features in mask taken
    // from x, the rest from the background row.
    std::array<double, 8> v{};
    const double inv_k = 1.0 / static_cast<double>(background.size());
    for (int mask = 0; mask < 8; ++mask) {
        double acc = 0.0;
        for (const auto& b : background) {
            std::array<double, 3> z;
            for (int i = 0; i < 3; ++i) z[i] = (mask >> i) & 1 ? x[i] : b[i];
            const double val = f(z);
            if (!std::isfinite(val))
                throw std::runtime_error("exact_shapley: non-finite function value");
            acc += val;
        }
        v[mask] = acc * inv_k;
    }

    // Shapley weights |S|!(3-|S|-1)!/3! over coalitions S not containing i.
    static const double weight[3] = {2.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0};
    ShapRecord rec;
    rec.x = x;
    rec.baseline = v[0];
    rec.fx = v[7];
    for (int i = 0; i < 3; ++i) {
        double phi = 0.0;
        for (int mask = 0; mask < 8; ++mask) {
            if ((mask >> i) & 1) continue;
            const int size = ((mask >> 0) & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1);
            phi += weight[size] * (v[mask | (1 << i)] - v[mask]);
        }
        rec.phi[i] = phi;
    }
    return rec;
}

struct ContributionRow {
    int step = 0;
    std::array<double, 3> mean_abs_phi{};
    std::array<double, 3> share{}; // normalized to sum to 1
    std::size_t samples = 0;
    bool degenerate = false; // all-zero attributions; uniform share reported
};

struct ContributionTable {
    std::vector<ContributionRow> rows;
};

// Mean |phi| per model per prediction step, normalized per step.
// A single background of size K is drawn once from all samples.
inline ContributionTable
stepwise_contributions(const TernaryFn& f, const std::vector<StackingSample>& samples,
                       std::size_t background_size, RngStream rng,
                       std::size_t max_per_step = 0) {
    if (samples.empty())
        throw std::invalid_argument("stepwise_contributions: no samples");

    RngStream bg_rng = rng.substream(0);
    std::vector<std::array<double, 3>> background;
    const std::size_t k = std::min(background_size, samples.size());
    for (std::size_t i = 0; i < k; ++i)
        background.push_back(samples[bg_rng.next_index(samples.size())].x);

    int max_step = 0;
    for (const auto& s : samples) max_step = std::max(max_step, s.step);
    std::vector<std::vector<const StackingSample*>> groups(max_step);
    for (const auto& s : samples) {
        if (s.step < 1)
            throw std::invalid_argument("stepwise_contributions: step index < 1");
        groups[s.step - 1].push_back(&s);
    }

    RngStream pick_rng = rng.substream(1);
    ContributionTable table;
    for (int step = 1; step <= max_step; ++step) {
        auto& group = groups[step - 1];
        if (group.empty())
            throw std::invalid_argument("stepwise_contributions: no samples for step " +
                                        std::to_string(step));
        if (max_per_step > 0 && group.size() > max_per_step) {
            pick_rng.shuffle(group);
            group.resize(max_per_step);
        }
        ContributionRow row;
        row.step = step;
        row.samples = group.size();
        for (const auto* s : group) {
            const ShapRecord rec = exact_shapley(f, s->x, background);
            for (int i = 0; i < 3; ++i) row.mean_abs_phi[i] += std::abs(rec.phi[i]);
        }
        for (int i = 0; i < 3; ++i)
            row.mean_abs_phi[i] /= static_cast<double>(group.size());
        const double total =
            row.mean_abs_phi[0] + row.mean_abs_phi[1] + row.mean_abs_phi[2];
        if (total > 0.0) {
            for (int i = 0; i < 3; ++i) row.share[i] = row.mean_abs_phi[i] / total;
        } else {
            row.degenerate = true;
            row.share = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        }
        table.rows.push_back(row);
    }
    return table;
}

inline TernaryFn meta_as_fn(const MetaNetParams& meta) {
    return [&meta](const std::array<double, 3>& x) { return meta_forward(meta, x); };
}

} // namespace wallcast
