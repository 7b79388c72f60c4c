#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace wallcast {

// ---------------------------------------------------------------------------
// Natural cubic spline interpolation (zero second derivative at the ends).
// Passes through every knot exactly.
// ---------------------------------------------------------------------------
inline std::vector<double>
spline_resample(const std::vector<double>& depths, const std::vector<double>& values,
                std::size_t n = 100) {
    const std::size_t k = depths.size();
    if (k < 4) throw std::invalid_argument("spline_resample: need at least 4 knots");
    if (values.size() != k)
        throw std::invalid_argument("spline_resample: depth/value size mismatch");
    for (std::size_t i = 1; i < k; ++i)
        if (!(depths[i] > depths[i - 1]))
            throw std::invalid_argument("spline_resample: depths must be strictly increasing");

    // Second derivatives from the natural-spline tridiagonal system.
    std::vector<double> m(k, 0.0), diag(k, 0.0), rhs(k, 0.0), sub(k, 0.0), sup(k, 0.0);
    for (std::size_t i = 1; i + 1 < k; ++i) {
        const double h0 = depths[i] - depths[i - 1];
        const double h1 = depths[i + 1] - depths[i];
        sub[i] = h0;
        diag[i] = 2.0 * (h0 + h1);
        sup[i] = h1;
        rhs[i] = 6.0 * ((values[i + 1] - values[i]) / h1 -
                        (values[i] - values[i - 1]) / h0);
    }
    // Thomas algorithm on rows 1..k-2 with m[0] = m[k-1] = 0.
    for (std::size_t i = 2; i + 1 < k; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = k - 2; i >= 1; --i) {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        if (i == 1) break;
    }

    std::vector<double> out(n);
    const double lo = depths.front(), hi = depths.back();
    std::size_t seg = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double x = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(j) /
                                            static_cast<double>(n - 1);
        while (seg + 2 < k && depths[seg + 1] < x) ++seg;
        const double h = depths[seg + 1] - depths[seg];
        const double a = (depths[seg + 1] - x) / h;
        const double b = (x - depths[seg]) / h;
        out[j] = a * values[seg] + b * values[seg + 1] +
                 ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * h * h / 6.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resampling records to the fixed 100-point spatial grid.
// ---------------------------------------------------------------------------
struct ResampledRecord {
    std::string source_id;
    double wall_length = 0.0;
    Tensor displacement; // [phases, 100], meters

    std::size_t phases() const { return displacement.shape[0]; }
};

inline ResampledRecord resample_record(const SimulationRecord& rec,
                                       std::size_t n_points = 100) {
    const std::size_t phases = rec.displacement.shape[0];
    const std::size_t knots = rec.displacement.shape[1];
    std::vector<double> depths(knots);
    for (std::size_t j = 0; j < knots; ++j) depths[j] = 0.5 * static_cast<double>(j);

    ResampledRecord out;
    out.source_id = rec.id;
    out.wall_length = rec.excavation.wall_length;
    out.displacement = Tensor({phases, n_points});
    std::vector<double> row(knots);
    for (std::size_t p = 0; p < phases; ++p) {
        std::copy(rec.displacement.v.begin() + p * knots,
                  rec.displacement.v.begin() + (p + 1) * knots, row.begin());
        const auto res = spline_resample(depths, row, n_points);
        std::copy(res.begin(), res.end(), out.displacement.v.begin() + p * n_points);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sliding windows. A window is t consecutive phases; its target, when the
// following phase exists, is that next profile. The last window of each
// record is inference-only.
// ---------------------------------------------------------------------------
struct WindowRef {
    std::size_t record;
    std::size_t start;
    bool has_target;
};

struct WindowSet {
    int resolution = 0;
    const std::vector<ResampledRecord>* records = nullptr; // not owned
    std::vector<WindowRef> windows;

    std::size_t size() const { return windows.size(); }
    std::size_t target_count() const {
        std::size_t n = 0;
        for (const auto& w : windows) n += w.has_target ? 1 : 0;
        return n;
    }
};

inline WindowSet make_windows(const std::vector<ResampledRecord>& records, int t) {
    if (t < 1) throw std::invalid_argument("make_windows: resolution must be >= 1");
    WindowSet ws;
    ws.resolution = t;
    ws.records = &records;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const std::size_t phases = records[r].phases();
        if (phases < static_cast<std::size_t>(t) + 1)
            throw std::invalid_argument("make_windows: record '" + records[r].source_id +
                                        "' has " + std::to_string(phases) +
                                        " phases, need at least " + std::to_string(t + 1));
        for (std::size_t s = 0; s + t <= phases; ++s)
            ws.windows.push_back({r, s, s + t < phases});
    }
    return ws;
}

inline Tensor window_input(const WindowSet& ws, std::size_t i) {
    const WindowRef& w = ws.windows.at(i);
    const ResampledRecord& rec = (*ws.records)[w.record];
    const std::size_t np = rec.displacement.shape[1];
    const std::size_t t = static_cast<std::size_t>(ws.resolution);
    Tensor x({t, np});
    std::copy(rec.displacement.v.begin() + w.start * np,
              rec.displacement.v.begin() + (w.start + t) * np, x.v.begin());
    return x;
}

inline Tensor window_target(const WindowSet& ws, std::size_t i) {
    const WindowRef& w = ws.windows.at(i);
    if (!w.has_target) throw std::invalid_argument("window_target: window has no target");
    const ResampledRecord& rec = (*ws.records)[w.record];
    const std::size_t np = rec.displacement.shape[1];
    const std::size_t s = w.start + static_cast<std::size_t>(ws.resolution);
    Tensor y({np});
    std::copy(rec.displacement.v.begin() + s * np,
              rec.displacement.v.begin() + (s + 1) * np, y.v.begin());
    return y;
}

// ---------------------------------------------------------------------------
// Train/val/test split.
// ---------------------------------------------------------------------------
enum class SplitMode { SequenceLevel, RecordLevel };

struct SplitSet {
    WindowSet train, val, test;
    SplitMode mode;
    std::uint64_t seed;
};

inline SplitSet split(const WindowSet& ws, const std::array<double, 3>& ratios,
                      SplitMode mode, std::uint64_t seed) {
    if (ws.windows.empty()) throw std::invalid_argument("split: empty window set");
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw std::invalid_argument("split: ratios must sum to 1");

    SplitSet out;
    out.mode = mode;
    out.seed = seed;
    for (WindowSet* s : {&out.train, &out.val, &out.test}) {
        s->resolution = ws.resolution;
        s->records = ws.records;
    }

    RngStream rng(seed, 0x73706c69);
    auto cut = [](std::size_t n, double r) {
        return static_cast<std::size_t>(std::llround(static_cast<double>(n) * r));
    };

    if (mode == SplitMode::SequenceLevel) {
        std::vector<std::size_t> order(ws.windows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        const std::size_t n = order.size();
        const std::size_t n_train = cut(n, ratios[0]);
        const std::size_t n_val = std::min(n - n_train, cut(n, ratios[1]));
        for (std::size_t i = 0; i < n; ++i) {
            const WindowRef& w = ws.windows[order[i]];
            (i < n_train ? out.train : i < n_train + n_val ? out.val : out.test)
                .windows.push_back(w);
        }
    } else {
        std::vector<std::size_t> rec_ids;
        for (const auto& w : ws.windows)
            if (rec_ids.empty() || rec_ids.back() != w.record)
                rec_ids.push_back(w.record);
        std::sort(rec_ids.begin(), rec_ids.end());
        rec_ids.erase(std::unique(rec_ids.begin(), rec_ids.end()), rec_ids.end());
        rng.shuffle(rec_ids);
        const std::size_t n = rec_ids.size();
        const std::size_t n_train = cut(n, ratios[0]);
        const std::size_t n_val = std::min(n - n_train, cut(n, ratios[1]));
        std::vector<int> bucket(ws.records->size(), 2);
        for (std::size_t i = 0; i < n; ++i)
            bucket[rec_ids[i]] = i < n_train ? 0 : i < n_train + n_val ? 1 : 2;
        for (const auto& w : ws.windows) {
            (bucket[w.record] == 0 ? out.train
             : bucket[w.record] == 1 ? out.val
                                     : out.test)
                .windows.push_back(w);
        }
    }
    return out;
}

// Materialize supervised (window, target) pairs from a window set.
inline std::vector<std::pair<Tensor, Tensor>> supervised_pairs(const WindowSet& ws) {
    std::vector<std::pair<Tensor, Tensor>> out;
    for (std::size_t i = 0; i < ws.windows.size(); ++i)
        if (ws.windows[i].has_target)
            out.emplace_back(window_input(ws, i), window_target(ws, i));
    return out;
}

// ---------------------------------------------------------------------------
// Field CSV ingestion. Header row of labels; first column depth in meters,
// remaining columns displacement in millimeters per measurement step.
// ---------------------------------------------------------------------------
inline ResampledRecord ingest_field_csv(const std::string& path,
                                        std::size_t n_points = 100) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_field_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("ingest_field_csv: empty file " + path);

    std::vector<double> depths;
    std::vector<std::vector<double>> columns; // per step
    std::size_t n_cols = 0;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const double x = std::stod(cell, &used);
                row.push_back(x);
            } catch (const std::exception&) {
                throw std::runtime_error("ingest_field_csv: non-numeric cell '" + cell +
                                         "' at row " + std::to_string(row_no));
            }
        }
        if (row.size() < 2)
            throw std::runtime_error(
                "ingest_field_csv: need a depth column plus at least one "
                "measurement column (row " + std::to_string(row_no) + ")");
        if (n_cols == 0) {
            n_cols = row.size();
            columns.assign(n_cols - 1, {});
        } else if (row.size() != n_cols) {
            throw std::runtime_error("ingest_field_csv: ragged row " +
                                     std::to_string(row_no));
        }
        depths.push_back(row[0]);
        for (std::size_t c = 1; c < n_cols; ++c) columns[c - 1].push_back(row[c]);
    }
    if (depths.size() < 4)
        throw std::runtime_error("ingest_field_csv: need at least 4 depth rows");
    for (std::size_t i = 1; i < depths.size(); ++i)
        if (!(depths[i] > depths[i - 1]))
            throw std::runtime_error("ingest_field_csv: depths must be strictly increasing");

    ResampledRecord rec;
    rec.source_id = path;
    rec.wall_length = depths.back() - depths.front();
    rec.displacement = Tensor({columns.size(), n_points});
    for (std::size_t c = 0; c < columns.size(); ++c) {
        std::vector<double> meters(columns[c].size());
        for (std::size_t i = 0; i < meters.size(); ++i) meters[i] = columns[c][i] * 1e-3;
        const auto res = spline_resample(depths, meters, n_points);
        std::copy(res.begin(), res.end(), rec.displacement.v.begin() + c * n_points);
    }
    return rec;
}

} // namespace wallcast
