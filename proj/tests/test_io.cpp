#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "wallcast/datagen.hpp"
#include "wallcast/io.hpp"

using namespace wallcast;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    const fs::path dir = fs::temp_directory_path() / "wallcast_test_io";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("base64 round trip is bit exact") {
    // Known vector: 0.0 is eight zero bytes -> "AAAAAAAAAAA=".
    CHECK(base64_encode({0.0}) == "AAAAAAAAAAA=");
    CHECK(base64_decode("AAAAAAAAAAA=") == std::vector<double>{0.0});
    CHECK(base64_encode({}) == "");
    CHECK(base64_decode("") == std::vector<double>{});

    RngStream rng(1);
    std::vector<double> vals;
    for (int i = 0; i < 257; ++i) vals.push_back(rng.next_normal() * 1e-3);
    vals.push_back(-0.0);
    vals.push_back(1e-308);
    vals.push_back(std::numeric_limits<double>::denorm_min());
    const auto round = base64_decode(base64_encode(vals));
    REQUIRE(round.size() == vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        // Bit-level comparison, not value comparison.
        std::uint64_t a, b;
        std::memcpy(&a, &vals[i], 8);
        std::memcpy(&b, &round[i], 8);
        CHECK(a == b);
    }
    CHECK_THROWS_AS(base64_decode("!!!!"), std::invalid_argument);
    CHECK_THROWS_AS(base64_decode("AAAA"), std::invalid_argument); // 3 bytes
}

TEST_CASE("csv matrix round trip is lossless") {
    const fs::path dir = scratch();
    RngStream rng(2);
    Tensor m({7, 5});
    for (double& e : m.v) e = rng.next_normal() * 0.01;
    write_csv_matrix(dir / "m.csv", m);
    const Tensor back = read_csv_matrix(dir / "m.csv");
    REQUIRE(back.shape == m.shape);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(back[i] == m[i]);

    // Byte-identical rewrite.
    write_csv_matrix(dir / "m2.csv", back);
    CHECK(slurp(dir / "m.csv") == slurp(dir / "m2.csv"));

    write_csv_matrix(dir / "h.csv", m, "a,b,c,d,e");
    const Tensor with_h = read_csv_matrix(dir / "h.csv", true);
    CHECK(with_h.shape == m.shape);
}

TEST_CASE("convlstm weights survive save/load bit exactly") {
    const fs::path dir = scratch();
    const auto p = make_convlstm_stack(6, {1, 4, 2}, RngStream(9), 12, 0.5);
    save_convlstm(dir / "model.json", p, {{"note", "test"}});
    const auto q = load_convlstm(dir / "model.json");
    CHECK(q.resolution == 6);
    CHECK(q.spatial == 12);
    CHECK(q.dropout_rate == 0.5);
    CHECK(flatten_params(q) == flatten_params(p));

    // Loaded model predicts identically.
    Tensor window({6, 12});
    RngStream wr(3);
    for (double& e : window.v) e = 0.01 * wr.next_double();
    RngStream dummy;
    const Tensor a = convlstm_forward(p, window, false, dummy);
    const Tensor b = convlstm_forward(q, window, false, dummy);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    // Wrong kind rejected.
    save_meta_net(dir / "meta.json", make_meta_net({3, 4, 1}, RngStream(1)));
    CHECK_THROWS_WITH(load_convlstm(dir / "meta.json"),
                      Catch::Matchers::ContainsSubstring("wrong kind"));
}

TEST_CASE("meta net weights survive save/load bit exactly") {
    const fs::path dir = scratch();
    const auto p = make_meta_net({3, 8, 4, 1}, RngStream(11), 0.5, 0.3);
    save_meta_net(dir / "meta.json", p);
    const auto q = load_meta_net(dir / "meta.json");
    CHECK(q.plan == p.plan);
    CHECK(q.leaky_alpha == p.leaky_alpha);
    CHECK(flatten_meta(q) == flatten_meta(p));
    CHECK(meta_forward(q, {0.1, 0.2, 0.3}) == meta_forward(p, {0.1, 0.2, 0.3}));
    CHECK_THROWS(load_meta_net(dir / "nonexistent.json"));
}

TEST_CASE("database save/load round trip") {
    const fs::path dir = scratch() / "db";
    fs::remove_all(dir);
    std::vector<SimulationRecord> records;
    for (std::uint64_t i = 0; i < 2; ++i) {
        records.push_back(generate_record('A', 5, i));
        records.push_back(generate_record('B', 5, i));
    }
    save_database(dir, records, 5);
    const auto loaded = load_database(dir);
    REQUIRE(loaded.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].id == records[i].id);
        CHECK(loaded[i].case_tag == records[i].excavation.tag);
        CHECK(loaded[i].wall_length == records[i].excavation.wall_length);
        REQUIRE(loaded[i].displacement.shape == records[i].displacement.shape);
        for (std::size_t j = 0; j < records[i].displacement.size(); ++j)
            CHECK(loaded[i].displacement[j] == records[i].displacement[j]);
    }
    // Manifest records the draws for provenance.
    const std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"soil\"") != std::string::npos);
    CHECK(manifest.find("\"wall\"") != std::string::npos);
}

TEST_CASE("prep save/load round trip preserves windows and splits") {
    const fs::path dir = scratch() / "prep";
    fs::remove_all(dir);
    std::vector<ResampledRecord> records;
    for (std::uint64_t i = 0; i < 3; ++i)
        records.push_back(resample_record(generate_record('A', 7, i), 20));

    const WindowSet ws = make_windows(records, 3);
    const SplitSet sp = split(ws, {0.7, 0.2, 0.1}, SplitMode::SequenceLevel, 4);
    save_prep(dir, records, {{3, sp}});

    LoadedPrep lp;
    load_prep(dir, lp);
    REQUIRE(lp.records.size() == 3);
    REQUIRE(lp.splits.size() == 1);
    CHECK(lp.splits[0].first == 3);
    const SplitSet& sp2 = lp.splits[0].second;
    CHECK(sp2.mode == SplitMode::SequenceLevel);
    CHECK(sp2.seed == 4);
    REQUIRE(sp2.train.size() == sp.train.size());
    REQUIRE(sp2.val.size() == sp.val.size());
    REQUIRE(sp2.test.size() == sp.test.size());
    for (std::size_t i = 0; i < sp.train.size(); ++i) {
        CHECK(sp2.train.windows[i].record == sp.train.windows[i].record);
        CHECK(sp2.train.windows[i].start == sp.train.windows[i].start);
        CHECK(sp2.train.windows[i].has_target == sp.train.windows[i].has_target);
    }
    // Window payloads materialize identically through the loaded records.
    const Tensor x1 = window_input(sp.train, 0);
    const Tensor x2 = window_input(sp2.train, 0);
    for (std::size_t i = 0; i < x1.size(); ++i) CHECK(x1[i] == x2[i]);
}

TEST_CASE("report writers produce well-formed files") {
    const fs::path dir = scratch();
    std::vector<StepMetrics> steps(2);
    steps[0] = {1, 0.001, 0.9, 0.95, 10};
    steps[1] = {2, 0.002, 0.8, 0.90, 10};
    write_step_metrics_csv(dir / "steps.csv", {{"model_a", steps}});
    const std::string csv = slurp(dir / "steps.csv");
    CHECK(csv.rfind("model,step,mae,r2,ioa,n\n", 0) == 0);
    CHECK(csv.find("model_a,1,0.001,") != std::string::npos);

    ContributionTable table;
    ContributionRow row;
    row.step = 1;
    row.mean_abs_phi = {0.2, 0.3, 0.5};
    row.share = {0.2, 0.3, 0.5};
    row.samples = 6;
    table.rows.push_back(row);
    write_contributions_csv(dir / "contrib.csv", table,
                            {"model_a", "model_b", "model_c"});
    const std::string ccsv = slurp(dir / "contrib.csv");
    CHECK(ccsv.find("1,model_c,0.5,0.5,6,0") != std::string::npos);

    write_svg_lines(dir / "chart.svg", "test",
                    {{"s1", {0.1, 0.2, 0.3}}, {"s2", {0.3, 0.2, 0.1}}});
    const std::string svg = slurp(dir / "chart.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
}
