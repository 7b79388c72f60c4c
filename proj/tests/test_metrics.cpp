#include <catch2/catch_amalgamated.hpp>

#include "wallcast/evalmetrics.hpp"
#include "wallcast/rng.hpp"

using namespace wallcast;

namespace {

Tensor vec(std::initializer_list<double> vals) {
    Tensor t({vals.size()});
    std::copy(vals.begin(), vals.end(), t.v.begin());
    return t;
}

} // namespace

TEST_CASE("mae hand values") {
    CHECK(mae(vec({1, 2, 3}), vec({1, 2, 3})) == 0.0);
    CHECK_THAT(mae(vec({1, -3}), vec({0, 0})),
               Catch::Matchers::WithinAbs(2.0, 1e-15));
    CHECK_THAT(mae(vec({1.5, 1.5, 3.5, 3.5}), vec({1, 2, 3, 4})),
               Catch::Matchers::WithinAbs(0.5, 1e-15));
    CHECK_THROWS_AS(mae(vec({1}), vec({1, 2})), std::invalid_argument);
}

TEST_CASE("r2 hand values") {
    CHECK_THAT(r2(vec({1, 2, 3}), vec({1, 2, 3})),
               Catch::Matchers::WithinAbs(1.0, 1e-15));
    // Prediction equal to the observation mean: SSE == SST -> 0.
    CHECK_THAT(r2(vec({2, 2, 2}), vec({1, 2, 3})),
               Catch::Matchers::WithinAbs(0.0, 1e-15));
    // Anti-correlated prediction: SSE = 4+0+4 = 8, SST = 2 -> -3.
    CHECK_THAT(r2(vec({3, 2, 1}), vec({1, 2, 3})),
               Catch::Matchers::WithinAbs(-3.0, 1e-12));
    // Worked value: obs {2,4,6,8}, pred {2.5,3.5,6.5,7.5}.
    // SSE = 4*0.25 = 1, SST = 9+1+1+9 = 20 -> 0.95.
    CHECK_THAT(r2(vec({2.5, 3.5, 6.5, 7.5}), vec({2, 4, 6, 8})),
               Catch::Matchers::WithinAbs(0.95, 1e-12));
    // Constant observations: variance 0 is undefined.
    CHECK_THROWS_AS(r2(vec({1, 2, 3}), vec({5, 5, 5})), std::invalid_argument);
}

TEST_CASE("ioa hand values") {
    CHECK_THAT(ioa(vec({1, 2, 3}), vec({1, 2, 3})),
               Catch::Matchers::WithinAbs(1.0, 1e-15));
    // Identical constants: defined as 1.
    CHECK_THAT(ioa(vec({4, 4}), vec({4, 4})),
               Catch::Matchers::WithinAbs(1.0, 1e-15));

    // obs {1,2,3}, pred {2,2,2}; ō = 2.
    // num = 1 + 0 + 1 = 2; den = 1 + 0 + 1 = 2 -> 0.
    CHECK_THAT(ioa(vec({2, 2, 2}), vec({1, 2, 3})),
               Catch::Matchers::WithinAbs(0.0, 1e-15));

    // obs {1,2,3}, pred {1.5,2,2.5}; ō = 2.
    // num = 0.25 + 0 + 0.25 = 0.5; den = (0.5+1)² + 0 + (0.5+1)² = 4.5.
    CHECK_THAT(ioa(vec({1.5, 2.0, 2.5}), vec({1, 2, 3})),
               Catch::Matchers::WithinAbs(1.0 - 0.5 / 4.5, 1e-12));

    // obs constant, pred a different constant: obs {3,3}, pred {5,5}.
    // num = 8, den = (2+0)²·2 = 8 -> 0.
    CHECK_THAT(ioa(vec({5, 5}), vec({3, 3})),
               Catch::Matchers::WithinAbs(0.0, 1e-12));

    CHECK_THROWS_AS(ioa(vec({1}), vec({1, 2})), std::invalid_argument);

    // Bounded in [0,1] for these inputs and invariant to a shared offset.
    Tensor o = vec({0.1, 0.4, 0.9, 1.6, 2.0});
    Tensor p = vec({0.2, 0.3, 1.1, 1.4, 2.3});
    const double base = ioa(p, o);
    CHECK(base > 0.0);
    CHECK(base < 1.0);
    for (auto& e : o.v) e += 7.0;
    for (auto& e : p.v) e += 7.0;
    CHECK_THAT(ioa(p, o), Catch::Matchers::WithinAbs(base, 1e-12));
}

TEST_CASE("stepwise_eval groups rows by forecast step") {
    // Two sequences, horizon 2, 3 spatial points; prediction offset +-0.1.
    RngStream rng(13);
    Tensor t1({2, 3}), t2({2, 3});
    for (Tensor* t : {&t1, &t2})
        for (double& e : t->v) e = rng.next_double();
    Tensor p1 = t1, p2 = t2;
    for (double& e : p1.v) e += 0.1;
    for (double& e : p2.v) e -= 0.1;

    const auto rows = stepwise_eval({p1, p2}, {t1, t2}, 2);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].step == 1);
    CHECK(rows[1].step == 2);
    for (const auto& r : rows) {
        CHECK(r.sequences == 2);
        CHECK_THAT(r.mean_mae, Catch::Matchers::WithinAbs(0.1, 1e-12));
        CHECK(r.mean_ioa <= 1.0);
    }

    // Step averaging: one perfect sequence, one offset sequence -> mean MAE
    // is half the offset at every step.
    const auto rows2 = stepwise_eval({t1, p2}, {t1, t2}, 2);
    for (const auto& r : rows2)
        CHECK_THAT(r.mean_mae, Catch::Matchers::WithinAbs(0.05, 1e-12));

    CHECK_THROWS_AS(stepwise_eval({}, {}, 2), std::invalid_argument);
    CHECK_THROWS_AS(stepwise_eval({t1}, {t1}, 3), std::invalid_argument);
}
