#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace wallcast {

// ---------------------------------------------------------------------------
// Parameter tables for the five-layer stratigraphy, wall, and struts.
// ---------------------------------------------------------------------------
enum class SoilModel { HardeningSoil, MohrCoulomb };

struct SoilLayerSpec {
    int layer;              // 1..5, top down
    SoilModel model;
    double thickness_m;
    double gamma_mean, gamma_sd;    // total unit weight, kN/m^3
    double c_mean, c_sd;            // effective cohesion, kPa
    double phi_mean, phi_sd;        // friction angle, degrees
    double e50_mean, e50_sd;        // reference modulus, kPa
    double e_init;
};

inline const std::array<SoilLayerSpec, 5>& default_soil_specs() {
    static const std::array<SoilLayerSpec, 5> specs = {{
        {1, SoilModel::HardeningSoil, 2.0, 18.0, 2.0, 1.8, 0.5, 28.0, 2.5, 15000.0, 3000.0, 0.6},
        {2, SoilModel::HardeningSoil, 4.0, 19.0, 2.0, 5.0, 1.5, 28.0, 3.0, 30000.0, 6000.0, 0.5},
        {3, SoilModel::HardeningSoil, 9.0, 20.0, 2.0, 20.0, 5.0, 32.0, 3.0, 40000.0, 8000.0, 0.4},
        {4, SoilModel::HardeningSoil, 9.0, 21.0, 2.0, 50.0, 10.0, 32.0, 3.0, 60000.0, 15000.0, 0.4},
        {5, SoilModel::MohrCoulomb, 16.0, 23.0, 2.0, 80.0, 20.0, 35.0, 3.0, 1000.0, 200.0, 0.01},
    }};
    return specs;
}

struct SoilLayerDraw {
    double gamma;   // kN/m^3
    double c;       // kPa
    double phi;     // degrees
    double e50;     // kPa
    double e_oed;   // = e50
    double e_ur;    // = 3 * e50
    double e_init;
};

struct WallSpec {
    char type;          // 'A'..'F'
    double ei;          // MN.m^2/m
    double thickness;   // m
};

inline const std::array<WallSpec, 6>& wall_types() {
    static const std::array<WallSpec, 6> w = {{
        {'A', 100.0, 0.35}, {'B', 200.0, 0.49}, {'C', 400.0, 0.70},
        {'D', 600.0, 0.85}, {'E', 800.0, 0.98}, {'F', 1200.0, 1.20},
    }};
    return w;
}

struct StrutSpec {
    char type;
    double area_mm2;
    double axial_stiffness_mn;
    double elastic_modulus_mpa = 200500.0;
};

inline const std::array<StrutSpec, 6>& strut_types() {
    static const std::array<StrutSpec, 6> s = {{
        {'A', 3270.0, 670.0, 200500.0},  {'B', 4680.0, 959.0, 200500.0},
        {'C', 5620.0, 1152.0, 200500.0}, {'D', 7240.0, 1484.0, 200500.0},
        {'E', 8820.0, 1808.0, 200500.0}, {'F', 10700.0, 2194.0, 200500.0},
    }};
    return s;
}

// ---------------------------------------------------------------------------
// Excavation cases and the staged schedule.
// ---------------------------------------------------------------------------
struct ExcavationCase {
    char tag;                // 'A' or 'B'
    double final_depth;      // m
    double wall_length;      // m
    int phases;              // incl. phase 1 (wall installation, depth 0)
    int monitoring_points;   // wall_length / 0.5 + 1
    bool tip_constrained;    // B: tip embedded in bedrock
};

inline ExcavationCase make_case(char tag) {
    if (tag == 'A') return {'A', 14.0, 18.0, 29, 37, false};
    if (tag == 'B') return {'B', 20.0, 26.0, 41, 53, true};
    throw std::invalid_argument(std::string("make_case: unknown case '") + tag + "'");
}

struct Phase {
    int number;          // 1-based
    double depth;        // excavation depth at end of phase, m
    bool wall_installed; // phase 1 only
    int strut;           // 0 = none, else 1-based strut index
    double strut_depth;  // m, valid when strut > 0
};

// First strut at 1.0 m once excavation reaches 1.5 m, then every 3.0 m.
inline std::vector<Phase> build_schedule(const ExcavationCase& cs) {
    std::vector<Phase> phases;
    phases.push_back({1, 0.0, true, 0, 0.0});
    int next_strut = 1;
    for (int n = 2; n <= cs.phases; ++n) {
        Phase ph{n, 0.5 * (n - 1), false, 0, 0.0};
        const double strut_depth = 1.0 + 3.0 * (next_strut - 1);
        if (ph.depth >= strut_depth + 0.5 - 1e-9 && strut_depth + 0.5 < cs.final_depth) {
            ph.strut = next_strut;
            ph.strut_depth = strut_depth;
            ++next_strut;
        }
        phases.push_back(ph);
    }
    return phases;
}

// ---------------------------------------------------------------------------
// Stochastic parameter sampling (normal draws clipped to physical floors).
// ---------------------------------------------------------------------------
struct ParameterDraws {
    std::array<SoilLayerDraw, 5> soil;
    WallSpec wall;
    StrutSpec strut;
};

inline ParameterDraws sample_parameters(const std::array<SoilLayerSpec, 5>& specs,
                                        RngStream& rng) {
    ParameterDraws d;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& s = specs[i];
        SoilLayerDraw& l = d.soil[i];
        l.gamma = std::max(12.0, rng.next_normal(s.gamma_mean, s.gamma_sd));
        l.c = std::max(0.1, rng.next_normal(s.c_mean, s.c_sd));
        l.phi = std::clamp(rng.next_normal(s.phi_mean, s.phi_sd), 15.0, 50.0);
        l.e50 = std::max(0.2 * s.e50_mean, rng.next_normal(s.e50_mean, s.e50_sd));
        l.e_oed = l.e50;
        l.e_ur = 3.0 * l.e50;
        l.e_init = s.e_init;
    }
    d.wall = wall_types()[rng.next_index(6)];
    d.strut = strut_types()[rng.next_index(6)];
    return d;
}

inline ParameterDraws sample_parameters(RngStream& rng) {
    return sample_parameters(default_soil_specs(), rng);
}

// Draws with every soil value at its table mean and mid-range structure.
inline ParameterDraws mean_parameters() {
    ParameterDraws d;
    const auto& specs = default_soil_specs();
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& s = specs[i];
        d.soil[i] = {s.gamma_mean, s.c_mean, s.phi_mean, s.e50_mean,
                     s.e50_mean, 3.0 * s.e50_mean, s.e_init};
    }
    d.wall = wall_types()[2];  // EI 400
    d.strut = strut_types()[2]; // k 1152
    return d;
}

// ---------------------------------------------------------------------------
// Closed-form surrogate for the staged-excavation wall response.
// Stands in for the finite-element runs; every constant is configurable.
// ---------------------------------------------------------------------------
struct SurrogateConfig {
    double kappa = 2.0e-4;       // magnitude scale (E in MPa)
    double ei_ref = 400.0;       // MN.m^2/m
    double ei_exp = 0.3;
    double k_ref = 1152.0;       // MN
    double k_exp = 0.2;
    double w_concave_a = 0.4;    // cantilever-shape weight, Case A
    double w_concave_b = 0.1;    // Case B
    double noise_amp = 0.02;     // fraction of U_p
    double noise_corr_len = 2.0; // m
    double ar_rho = 0.8;         // temporal AR(1)
    double max_disp = 1.0;       // m, hard error threshold
};

// Thickness-weighted mean of a per-layer quantity over [0, wall_length].
inline double depth_weighted_mean(const ParameterDraws& d, double wall_length,
                                  double SoilLayerDraw::* field) {
    const auto& specs = default_soil_specs();
    double acc = 0.0, top = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        const double bottom = std::min(top + specs[i].thickness_m, wall_length);
        if (bottom > top) acc += (bottom - top) * (d.soil[i].*field);
        top = bottom;
        if (top >= wall_length) break;
    }
    return acc / wall_length;
}

// phases x monitoring_points displacement matrix in meters; row 0 (wall
// installation, no excavation) is identically zero and per-point values
// never decrease over phases.
inline Tensor simulate_profile(const ExcavationCase& cs, const ParameterDraws& d,
                               RngStream rng, const SurrogateConfig& cfg = {}) {
    const auto schedule = build_schedule(cs);
    const int np = cs.monitoring_points;
    const double dz = 0.5;
    const double lw = cs.wall_length;

    const double gbar = depth_weighted_mean(d, lw, &SoilLayerDraw::gamma);
    const double ebar_mpa = depth_weighted_mean(d, lw, &SoilLayerDraw::e50) / 1000.0;
    const double stiff = std::pow(cfg.ei_ref / d.wall.ei, cfg.ei_exp) *
                         std::pow(cfg.k_ref / d.strut.axial_stiffness_mn, cfg.k_exp);
    const double w_c = cs.tag == 'A' ? cfg.w_concave_a : cfg.w_concave_b;

    // Smooth spatial noise: iid normals convolved with a Gaussian kernel,
    // normalized to unit variance, then AR(1) across phases.
    RngStream noise_rng = rng.substream(1);
    const int kr = std::max(1, static_cast<int>(std::ceil(3.0 * cfg.noise_corr_len / dz)));
    std::vector<double> kernel(2 * kr + 1);
    double knorm = 0.0;
    for (int m = -kr; m <= kr; ++m) {
        const double w = std::exp(-0.5 * (m * dz) * (m * dz) /
                                  (cfg.noise_corr_len * cfg.noise_corr_len));
        kernel[m + kr] = w;
        knorm += w * w;
    }
    knorm = std::sqrt(knorm);
    for (double& w : kernel) w /= knorm;
    auto smooth_field = [&](std::vector<double>& out) {
        std::vector<double> eps(np + 2 * kr);
        for (double& e : eps) e = noise_rng.next_normal();
        out.assign(np, 0.0);
        for (int j = 0; j < np; ++j) {
            double acc = 0.0;
            for (int m = 0; m < 2 * kr + 1; ++m) acc += kernel[m] * eps[j + m];
            out[j] = acc;
        }
    };

    Tensor u({static_cast<std::size_t>(cs.phases), static_cast<std::size_t>(np)});
    std::vector<double> field(np, 0.0), fresh;
    int struts = 0;
    for (int p = 0; p < cs.phases; ++p) {
        if (schedule[p].strut > 0) ++struts;
        if (p == 0) continue; // wall installation, no excavation
        const double depth = schedule[p].depth;

        smooth_field(fresh);
        const double rho = cfg.ar_rho;
        for (int j = 0; j < np; ++j)
            field[j] = rho * field[j] + std::sqrt(1.0 - rho * rho) * fresh[j];

        const double mag = cfg.kappa * gbar * depth * depth / ebar_mpa * stiff *
                           (1.0 + 0.5 / (1.0 + struts));
        const double sigma_b = 0.25 * depth + 1.0;
        for (int j = 0; j < np; ++j) {
            const double z = j * dz;
            const double bulge = (z - 0.75 * depth) / sigma_b;
            const double shape = w_c * std::exp(-z / (0.6 * depth)) +
                                 (1.0 - w_c) * std::exp(-0.5 * bulge * bulge);
            const double taper =
                cs.tip_constrained ? 1.0 - std::pow(z / lw, 3.0) : 1.0;
            const double raw =
                (mag * shape + cfg.noise_amp * mag * field[j]) * taper;
            const double prev = u[(p - 1) * np + j];
            const double val = std::max(prev, raw);
            if (std::abs(val) >= cfg.max_disp)
                throw std::runtime_error("simulate_profile: displacement exceeded " +
                                         std::to_string(cfg.max_disp) + " m");
            u[p * np + j] = val;
        }
    }
    return u;
}

// ---------------------------------------------------------------------------
// Database generation.
// ---------------------------------------------------------------------------
struct SimulationRecord {
    std::string id;
    ExcavationCase excavation;
    ParameterDraws draws;
    std::uint64_t seed;
    Tensor displacement; // [phases, monitoring_points], meters
};

inline SimulationRecord
generate_record(char case_tag, std::uint64_t seed, std::uint64_t index,
                const SurrogateConfig& cfg = {}) {
    const ExcavationCase cs = make_case(case_tag);
    const std::uint64_t stream_id =
        (case_tag == 'A' ? 0x41000000ULL : 0x42000000ULL) + index;
    SimulationRecord rec;
    rec.excavation = cs;
    rec.seed = seed;
    rec.id = std::string(1, case_tag) + "_" + std::to_string(index);
    for (std::uint64_t attempt = 0;; ++attempt) {
        RngStream rng = RngStream(seed, stream_id).substream(attempt);
        RngStream param_rng = rng.substream(0);
        rec.draws = sample_parameters(default_soil_specs(), param_rng);
        try {
            rec.displacement = simulate_profile(cs, rec.draws, rng, cfg);
            break;
        } catch (const std::runtime_error&) {
            if (attempt > 32)
                throw std::runtime_error("generate_record: surrogate kept overflowing");
        }
    }
    return rec;
}

inline std::vector<SimulationRecord>
generate_database(std::size_t n_per_case, std::uint64_t seed,
                  const SurrogateConfig& cfg = {}) {
    if (n_per_case < 1)
        throw std::invalid_argument("generate_database: n_per_case must be >= 1");
    std::vector<SimulationRecord> records;
    records.reserve(2 * n_per_case);
    for (char tag : {'A', 'B'})
        for (std::size_t i = 0; i < n_per_case; ++i)
            records.push_back(generate_record(tag, seed, i, cfg));
    return records;
}

// ---------------------------------------------------------------------------
// Field-like series: irregular growth with plateaus, localized bumps, and
// small non-monotonic wiggles, at millimeter scale.
// ---------------------------------------------------------------------------
struct FieldLikeConfig {
    double max_scale_m = 0.011;  // target order of the final maximum
    double wiggle = 0.05;        // non-monotone noise, fraction of scale
    double plateau_prob = 0.3;   // chance a step adds ~nothing
    int bumps = 3;               // localized anomalies
    double bump_frac = 0.2;      // bump height, fraction of scale
};

inline Tensor generate_field_like(int n_steps, int n_points, RngStream rng,
                                  const FieldLikeConfig& cfg = {}) {
    if (n_steps < 11)
        throw std::invalid_argument(
            "generate_field_like: need at least 11 steps (10-window plus target)");
    if (n_points < 4)
        throw std::invalid_argument("generate_field_like: need at least 4 points");

    RngStream inc_rng = rng.substream(0);
    RngStream bump_rng = rng.substream(1);
    RngStream wig_rng = rng.substream(2);

    // Irregular cumulative growth factors, normalized to end at 1.
    std::vector<double> growth(n_steps, 0.0);
    double acc = 0.0;
    for (int s = 1; s < n_steps; ++s) {
        double inc = inc_rng.next_double();
        if (inc_rng.next_double() < cfg.plateau_prob) inc *= 0.02;
        acc += inc;
        growth[s] = acc;
    }
    if (acc > 0.0)
        for (double& g : growth) g /= acc;

    // Base bulge over depth.
    std::vector<double> base(n_points);
    for (int j = 0; j < n_points; ++j) {
        const double zf = static_cast<double>(j) / (n_points - 1);
        base[j] = std::exp(-0.5 * std::pow((zf - 0.45) / 0.25, 2.0));
    }

    Tensor u({static_cast<std::size_t>(n_steps), static_cast<std::size_t>(n_points)});
    for (int s = 0; s < n_steps; ++s)
        for (int j = 0; j < n_points; ++j)
            u[s * n_points + j] = cfg.max_scale_m * growth[s] * base[j];

    // Localized bumps that appear at a random step and persist.
    for (int b = 0; b < cfg.bumps; ++b) {
        const int s0 = 1 + static_cast<int>(bump_rng.next_index(n_steps - 1));
        const double center = bump_rng.next_double() * (n_points - 1);
        const double width = 1.0 + 2.0 * bump_rng.next_double();
        const double height = cfg.bump_frac * cfg.max_scale_m * bump_rng.next_double();
        for (int s = s0; s < n_steps; ++s)
            for (int j = 0; j < n_points; ++j) {
                const double r = (j - center) / width;
                u[s * n_points + j] += height * std::exp(-0.5 * r * r);
            }
    }

    // Small non-monotonic wiggles.
    if (cfg.wiggle > 0.0)
        for (int s = 1; s < n_steps; ++s)
            for (int j = 0; j < n_points; ++j)
                u[s * n_points + j] +=
                    cfg.wiggle * cfg.max_scale_m * wig_rng.next_normal() *
                    base[j];

    return u;
}

} // namespace wallcast
