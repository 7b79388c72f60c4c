#include <catch2/catch_amalgamated.hpp>

#include "wallcast/attribution.hpp"

using namespace wallcast;

namespace {

std::vector<std::array<double, 3>> random_background(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<std::array<double, 3>> bg(n);
    for (auto& b : bg)
        for (double& e : b) e = rng.next_normal();
    return bg;
}

} // namespace

TEST_CASE("shapley on a linear function is exact per coefficient") {
    // f(x) = 2 x0 - 3 x1 + 0.5 x2 + 7: phi_i = a_i (x_i - mean bg_i).
    const TernaryFn f = [](const std::array<double, 3>& x) {
        return 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 7.0;
    };
    const auto bg = random_background(40, 3);
    std::array<double, 3> mean{};
    for (const auto& b : bg)
        for (int i = 0; i < 3; ++i) mean[i] += b[i] / 40.0;

    const std::array<double, 3> x = {1.2, -0.7, 0.4};
    const ShapRecord rec = exact_shapley(f, x, bg);
    const double a[3] = {2.0, -3.0, 0.5};
    for (int i = 0; i < 3; ++i)
        CHECK_THAT(rec.phi[i],
                   Catch::Matchers::WithinAbs(a[i] * (x[i] - mean[i]), 1e-12));
    CHECK_THAT(rec.fx, Catch::Matchers::WithinAbs(f(x), 1e-12));
}

TEST_CASE("shapley axioms on a nonlinear function") {
    const TernaryFn f = [](const std::array<double, 3>& x) {
        return x[0] * x[1] + std::tanh(x[2]) + 0.3 * x[0] * x[0];
    };
    const auto bg = random_background(25, 9);
    RngStream xr(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::array<double, 3> x = {xr.next_normal(), xr.next_normal(),
                                         xr.next_normal()};
        const ShapRecord rec = exact_shapley(f, x, bg);
        // Efficiency: contributions sum to f(x) - baseline.
        CHECK_THAT(rec.phi[0] + rec.phi[1] + rec.phi[2],
                   Catch::Matchers::WithinAbs(rec.fx - rec.baseline, 1e-9));
    }
}

TEST_CASE("shapley null player gets zero") {
    const TernaryFn f = [](const std::array<double, 3>& x) {
        return std::sin(x[0]) + x[1] * x[1];
    };
    const auto bg = random_background(30, 5);
    const ShapRecord rec = exact_shapley(f, {0.4, -1.1, 2.2}, bg);
    CHECK_THAT(rec.phi[2], Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("shapley symmetry for exchangeable players") {
    // Symmetric function with a background symmetric in features 0 and 1.
    const TernaryFn f = [](const std::array<double, 3>& x) {
        return x[0] + x[1] + x[0] * x[1] + 2.0 * x[2];
    };
    std::vector<std::array<double, 3>> bg;
    RngStream rng(8);
    for (int i = 0; i < 20; ++i) {
        const double a = rng.next_normal(), b = rng.next_normal(),
                     c = rng.next_normal();
        bg.push_back({a, b, c});
        bg.push_back({b, a, c}); // mirror keeps the background exchangeable
    }
    const ShapRecord rec = exact_shapley(f, {0.9, 0.9, -0.3}, bg);
    CHECK_THAT(rec.phi[0], Catch::Matchers::WithinAbs(rec.phi[1], 1e-9));
}

TEST_CASE("shapley linearity") {
    const TernaryFn f = [](const std::array<double, 3>& x) {
        return x[0] * x[1] - x[2];
    };
    const TernaryFn g = [](const std::array<double, 3>& x) {
        return std::exp(0.1 * x[0]) + x[2] * x[2];
    };
    const TernaryFn fg = [&](const std::array<double, 3>& x) {
        return 2.0 * f(x) + 5.0 * g(x);
    };
    const auto bg = random_background(15, 12);
    const std::array<double, 3> x = {0.2, 1.4, -0.8};
    const auto rf = exact_shapley(f, x, bg);
    const auto rg = exact_shapley(g, x, bg);
    const auto rfg = exact_shapley(fg, x, bg);
    for (int i = 0; i < 3; ++i)
        CHECK_THAT(rfg.phi[i],
                   Catch::Matchers::WithinAbs(2.0 * rf.phi[i] + 5.0 * rg.phi[i], 1e-9));
}

TEST_CASE("exact_shapley rejects bad input") {
    const TernaryFn f = [](const std::array<double, 3>& x) { return x[0]; };
    CHECK_THROWS_AS(exact_shapley(f, {1, 2, 3}, {}), std::invalid_argument);
    const TernaryFn nan_f = [](const std::array<double, 3>&) {
        return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(exact_shapley(nan_f, {1, 2, 3}, random_background(3, 1)),
                    std::runtime_error);
}

TEST_CASE("stepwise_contributions shares and degenerate flag") {
    // f depends only on x0: all share should go to model 0 at every step.
    const TernaryFn f = [](const std::array<double, 3>& x) { return 4.0 * x[0]; };
    RngStream rng(22);
    std::vector<StackingSample> samples;
    for (int step = 1; step <= 3; ++step)
        for (int i = 0; i < 12; ++i) {
            StackingSample s;
            s.x = {rng.next_normal(), rng.next_normal(), rng.next_normal()};
            s.y = 0.0;
            s.step = step;
            s.point = i;
            s.sequence = 0;
            samples.push_back(s);
        }

    const auto table = stepwise_contributions(f, samples, 8, RngStream(1));
    REQUIRE(table.rows.size() == 3);
    for (const auto& row : table.rows) {
        CHECK(row.samples == 12);
        CHECK_FALSE(row.degenerate);
        CHECK_THAT(row.share[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(row.share[0] + row.share[1] + row.share[2],
                   Catch::Matchers::WithinAbs(1.0, 1e-12));
    }

    // Capping limits the per-step sample count deterministically.
    const auto capped = stepwise_contributions(f, samples, 8, RngStream(1), 5);
    for (const auto& row : capped.rows) CHECK(row.samples == 5);
    const auto capped2 = stepwise_contributions(f, samples, 8, RngStream(1), 5);
    for (std::size_t r = 0; r < capped.rows.size(); ++r)
        for (int i = 0; i < 3; ++i)
            CHECK(capped.rows[r].mean_abs_phi[i] == capped2.rows[r].mean_abs_phi[i]);

    // Constant function: all-zero attributions -> uniform share + flag.
    const TernaryFn c = [](const std::array<double, 3>&) { return 1.0; };
    const auto flat = stepwise_contributions(c, samples, 8, RngStream(1));
    for (const auto& row : flat.rows) {
        CHECK(row.degenerate);
        for (int i = 0; i < 3; ++i)
            CHECK_THAT(row.share[i], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
    }

    CHECK_THROWS_AS(stepwise_contributions(f, {}, 8, RngStream(1)),
                    std::invalid_argument);
}

TEST_CASE("meta_as_fn wraps the ensemble net") {
    auto p = make_meta_net({3, 2, 1}, RngStream(50), 0.0, 0.3);
    std::vector<double> flat = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 0, 0, 0, 0, 1, 0, 0};
    unflatten_meta(flat, p);
    const TernaryFn f = meta_as_fn(p);
    CHECK_THAT(f({0.3, 0.6, 0.9}), Catch::Matchers::WithinAbs(0.6, 1e-12));
}
