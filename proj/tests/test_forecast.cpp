#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "wallcast/convlstm.hpp"
#include "wallcast/forecast.hpp"

using namespace wallcast;

namespace {

// All-zero parameters predict the zero profile regardless of input.
ConvLstmStackParams zero_stack(int t, std::size_t np) {
    auto p = make_convlstm_stack(t, {1, 2}, RngStream(1), np, 0.0);
    auto flat = flatten_params(p);
    std::fill(flat.begin(), flat.end(), 0.0);
    unflatten_params(flat, p);
    return p;
}

} // namespace

TEST_CASE("rollout shift-append mechanics") {
    const std::size_t np = 8;
    auto p = zero_stack(3, np);

    Tensor hist({5, np});
    for (double& e : hist.v) e = 0.5;

    const RolloutResult rr = rollout(p, hist, 4, "m");
    CHECK(rr.model_id == "m");
    REQUIRE(rr.predictions.shape == std::vector<std::size_t>{4, np});
    // Zero model: every forecast row is zero.
    for (double e : rr.predictions.v) CHECK(e == 0.0);
    // Seed window is the history tail.
    REQUIRE(rr.seed_window.shape == std::vector<std::size_t>{3, np});
    for (double e : rr.seed_window.v) CHECK(e == 0.5);

    Tensor short_hist({2, np});
    CHECK_THROWS_AS(rollout(p, short_hist, 2), std::invalid_argument);
    Tensor bad({5, np + 1});
    CHECK_THROWS_AS(rollout(p, bad, 2), std::invalid_argument);
    CHECK_THROWS_AS(rollout(p, hist, 0), std::invalid_argument);
}

TEST_CASE("rollout feeds its own predictions back") {
    // Verify the recursion against a manual re-implementation: each step is
    // a fresh forward pass on the shifted window.
    const std::size_t np = 6, t = 3;
    const int horizon = 5;
    auto p = make_convlstm_stack(static_cast<int>(t), {1, 3, 2}, RngStream(77), np, 0.0);

    Tensor hist({4, np});
    RngStream hr(5);
    for (double& e : hist.v) e = 0.01 * hr.next_double();

    const RolloutResult rr = rollout(p, hist, horizon);

    Tensor window({t, np});
    for (std::size_t s = 0; s < t; ++s)
        for (std::size_t j = 0; j < np; ++j)
            window[s * np + j] = hist[(4 - t + s) * np + j];
    RngStream dummy;
    for (int k = 0; k < horizon; ++k) {
        const Tensor pred = convlstm_forward(p, window, false, dummy);
        for (std::size_t j = 0; j < np; ++j)
            CHECK(rr.predictions[k * np + j] == pred[j]);
        std::copy(window.v.begin() + np, window.v.end(), window.v.begin());
        std::copy(pred.v.begin(), pred.v.end(), window.v.end() - np);
    }
}

TEST_CASE("rollout ignores dropout at inference") {
    const std::size_t np = 6;
    auto p = make_convlstm_stack(3, {1, 3, 2}, RngStream(3), np, 0.5);
    Tensor hist({3, np});
    RngStream hr(8);
    for (double& e : hist.v) e = 0.01 * hr.next_double();
    const auto a = rollout(p, hist, 3);
    const auto b = rollout(p, hist, 3);
    for (std::size_t i = 0; i < a.predictions.v.size(); ++i)
        CHECK(a.predictions[i] == b.predictions[i]);
}

TEST_CASE("multi_rollout runs each model at its own resolution") {
    const std::size_t np = 6;
    const auto ma = make_convlstm_stack(3, {1, 2}, RngStream(11), np, 0.0);
    const auto mb = make_convlstm_stack(6, {1, 2}, RngStream(12), np, 0.0);
    std::map<std::string, const ConvLstmStackParams*> models{
        {"model_a", &ma}, {"model_b", &mb}};

    Tensor hist({7, np});
    RngStream hr(4);
    for (double& e : hist.v) e = 0.005 * hr.next_double();

    const auto out = multi_rollout(models, hist, 4);
    REQUIRE(out.size() == 2);
    CHECK(out.at("model_a").seed_window.shape[0] == 3);
    CHECK(out.at("model_b").seed_window.shape[0] == 6);
    for (const auto& [name, rr] : out) {
        CHECK(rr.model_id == name);
        CHECK(rr.predictions.shape == std::vector<std::size_t>{4, np});
    }

    // model_b needs 6 history rows; a 5-row history must fail naming the id.
    Tensor h5({5, np});
    for (double& e : h5.v) e = 0.001;
    CHECK_THROWS_WITH(multi_rollout(models, h5, 2),
                      Catch::Matchers::ContainsSubstring("model_b"));
}
