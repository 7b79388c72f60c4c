#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "attribution.hpp"
#include "convlstm.hpp"
#include "datagen.hpp"
#include "ensemble.hpp"
#include "evalmetrics.hpp"
#include "pipeline.hpp"
#include "tensor.hpp"

namespace wallcast {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Base64 of raw little-endian doubles: bit-exact weight round trips.
// ---------------------------------------------------------------------------
inline std::string base64_encode(const std::vector<double>& values) {
    static const char tbl[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::vector<unsigned char> bytes(values.size() * 8);
    std::memcpy(bytes.data(), values.data(), bytes.size());
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
        out += tbl[(chunk >> 18) & 63];
        out += tbl[(chunk >> 12) & 63];
        out += i + 1 < bytes.size() ? tbl[(chunk >> 6) & 63] : '=';
        out += i + 2 < bytes.size() ? tbl[chunk & 63] : '=';
    }
    return out;
}

inline std::vector<double> base64_decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw std::invalid_argument("base64_decode: bad character");
    };
    std::vector<unsigned char> bytes;
    bytes.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i + 3 < text.size(); i += 4) {
        const int a = val(text[i]), b = val(text[i + 1]);
        const int c = val(text[i + 2]), d = val(text[i + 3]);
        bytes.push_back(static_cast<unsigned char>((a << 2) | (b >> 4)));
        if (c >= 0) bytes.push_back(static_cast<unsigned char>((b << 4) | (c >> 2)));
        if (d >= 0) bytes.push_back(static_cast<unsigned char>((c << 6) | d));
    }
    if (bytes.size() % 8 != 0)
        throw std::invalid_argument("base64_decode: not a multiple of 8 bytes");
    std::vector<double> values(bytes.size() / 8);
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

// ---------------------------------------------------------------------------
// CSV helpers. Doubles are written with max_digits10 so replays are
// byte-identical and reads are lossless.
// ---------------------------------------------------------------------------
inline std::string fmt_double(double x) {
    std::ostringstream ss;
    ss << std::setprecision(17) << x;
    return ss.str();
}

inline void write_csv_matrix(const fs::path& path, const Tensor& m,
                             const std::string& header = "") {
    if (m.shape.size() != 2) throw std::invalid_argument("write_csv_matrix: rank != 2");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv_matrix: cannot write " + path.string());
    if (!header.empty()) out << header << "\n";
    const std::size_t rows = m.shape[0], cols = m.shape[1];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) out << ",";
            out << fmt_double(m[r * cols + c]);
        }
        out << "\n";
    }
}

inline Tensor read_csv_matrix(const fs::path& path, bool has_header = false) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv_matrix: cannot open " + path.string());
    std::string line;
    if (has_header) std::getline(in, line);
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++c;
        }
        if (cols == 0) cols = c;
        else if (c != cols)
            throw std::runtime_error("read_csv_matrix: ragged row in " + path.string());
        ++rows;
    }
    return Tensor({rows, cols}, std::move(values));
}

// ---------------------------------------------------------------------------
// Versioned JSON weight files.
// ---------------------------------------------------------------------------
constexpr int kSchemaVersion = 1;

inline void save_convlstm(const fs::path& path, const ConvLstmStackParams& p,
                          const json& training_meta = json::object()) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "convlstm_stack";
    doc["resolution"] = p.resolution;
    doc["spatial"] = p.spatial;
    doc["dropout_rate"] = p.dropout_rate;
    json plan = json::array();
    plan.push_back(p.layers.front().c_in);
    for (const auto& l : p.layers) plan.push_back(l.c_out);
    doc["channel_plan"] = plan;
    doc["training"] = training_meta;
    json tensors = json::object();
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string pre = "layer" + std::to_string(i) + ".";
        tensors[pre + "wx"] = {{"shape", p.layers[i].wx.shape}, {"data", base64_encode(p.layers[i].wx.v)}};
        tensors[pre + "wh"] = {{"shape", p.layers[i].wh.shape}, {"data", base64_encode(p.layers[i].wh.v)}};
        tensors[pre + "b"] = {{"shape", p.layers[i].b.shape}, {"data", base64_encode(p.layers[i].b.v)}};
    }
    tensors["head.w"] = {{"shape", p.head_w.shape}, {"data", base64_encode(p.head_w.v)}};
    tensors["head.b"] = {{"shape", p.head_b.shape}, {"data", base64_encode(p.head_b.v)}};
    doc["tensors"] = tensors;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_convlstm: cannot write " + path.string());
    out << doc.dump(1) << "\n";
}

inline ConvLstmStackParams load_convlstm(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_convlstm: cannot open " + path.string());
    json doc = json::parse(in);
    if (doc.at("kind") != "convlstm_stack")
        throw std::runtime_error("load_convlstm: wrong kind in " + path.string());
    std::vector<std::size_t> plan = doc.at("channel_plan").get<std::vector<std::size_t>>();
    ConvLstmStackParams p = make_convlstm_stack(
        doc.at("resolution").get<int>(), plan, RngStream(0),
        doc.at("spatial").get<std::size_t>(), doc.at("dropout_rate").get<double>());
    auto load_tensor = [&doc](const std::string& name, Tensor& t) {
        const auto& node = doc.at("tensors").at(name);
        std::vector<std::size_t> shape = node.at("shape").get<std::vector<std::size_t>>();
        std::vector<double> data = base64_decode(node.at("data").get<std::string>());
        t = Tensor(std::move(shape), std::move(data));
    };
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string pre = "layer" + std::to_string(i) + ".";
        load_tensor(pre + "wx", p.layers[i].wx);
        load_tensor(pre + "wh", p.layers[i].wh);
        load_tensor(pre + "b", p.layers[i].b);
    }
    load_tensor("head.w", p.head_w);
    load_tensor("head.b", p.head_b);
    return p;
}

inline void save_meta_net(const fs::path& path, const MetaNetParams& p,
                          const json& training_meta = json::object()) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = "meta_net";
    doc["plan"] = p.plan;
    doc["leaky_alpha"] = p.leaky_alpha;
    doc["dropout_rate"] = p.dropout_rate;
    doc["training"] = training_meta;
    json tensors = json::object();
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string pre = "dense" + std::to_string(i) + ".";
        tensors[pre + "w"] = {{"shape", p.layers[i].w.shape}, {"data", base64_encode(p.layers[i].w.v)}};
        tensors[pre + "b"] = {{"shape", p.layers[i].b.shape}, {"data", base64_encode(p.layers[i].b.v)}};
    }
    doc["tensors"] = tensors;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_meta_net: cannot write " + path.string());
    out << doc.dump(1) << "\n";
}

inline MetaNetParams load_meta_net(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_meta_net: cannot open " + path.string());
    json doc = json::parse(in);
    if (doc.at("kind") != "meta_net")
        throw std::runtime_error("load_meta_net: wrong kind in " + path.string());
    MetaNetParams p = make_meta_net(doc.at("plan").get<std::vector<std::size_t>>(),
                                    RngStream(0), doc.at("dropout_rate").get<double>(),
                                    doc.at("leaky_alpha").get<double>());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string pre = "dense" + std::to_string(i) + ".";
        const auto& wn = doc.at("tensors").at(pre + "w");
        const auto& bn = doc.at("tensors").at(pre + "b");
        p.layers[i].w = Tensor(wn.at("shape").get<std::vector<std::size_t>>(),
                               base64_decode(wn.at("data").get<std::string>()));
        p.layers[i].b = Tensor(bn.at("shape").get<std::vector<std::size_t>>(),
                               base64_decode(bn.at("data").get<std::string>()));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Dataset on disk: one CSV per record plus a JSON manifest.
// ---------------------------------------------------------------------------
inline void save_database(const fs::path& dir, const std::vector<SimulationRecord>& records,
                          std::uint64_t seed) {
    fs::create_directories(dir);
    json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["seed"] = seed;
    manifest["record_count"] = records.size();
    json recs = json::array();
    for (const auto& r : records) {
        const std::string file = "record_" + r.id + ".csv";
        write_csv_matrix(dir / file, r.displacement);
        json rj;
        rj["id"] = r.id;
        rj["file"] = file;
        rj["case"] = std::string(1, r.excavation.tag);
        rj["phases"] = r.excavation.phases;
        rj["monitoring_points"] = r.excavation.monitoring_points;
        rj["wall_length_m"] = r.excavation.wall_length;
        json soil = json::array();
        for (const auto& l : r.draws.soil)
            soil.push_back({{"gamma", l.gamma}, {"c", l.c}, {"phi", l.phi},
                            {"e50", l.e50}, {"e_oed", l.e_oed}, {"e_ur", l.e_ur},
                            {"e_init", l.e_init}});
        rj["soil"] = soil;
        rj["wall"] = {{"type", std::string(1, r.draws.wall.type)},
                      {"ei", r.draws.wall.ei},
                      {"thickness", r.draws.wall.thickness}};
        rj["strut"] = {{"type", std::string(1, r.draws.strut.type)},
                       {"area_mm2", r.draws.strut.area_mm2},
                       {"axial_stiffness_mn", r.draws.strut.axial_stiffness_mn}};
        recs.push_back(rj);
    }
    manifest["records"] = recs;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("save_database: cannot write manifest");
    out << manifest.dump(1) << "\n";
}

struct LoadedRecord {
    std::string id;
    char case_tag;
    double wall_length;
    Tensor displacement;
};

inline std::vector<LoadedRecord> load_database(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw std::runtime_error("load_database: missing manifest in " + dir.string());
    json manifest = json::parse(in);
    std::vector<LoadedRecord> records;
    for (const auto& rj : manifest.at("records")) {
        LoadedRecord r;
        r.id = rj.at("id").get<std::string>();
        r.case_tag = rj.at("case").get<std::string>()[0];
        r.wall_length = rj.at("wall_length_m").get<double>();
        r.displacement = read_csv_matrix(dir / rj.at("file").get<std::string>());
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Prepared windows: resampled-record CSV shards plus a JSON index holding
// window references and the split assignment.
// ---------------------------------------------------------------------------
inline void save_prep(const fs::path& dir, const std::vector<ResampledRecord>& records,
                      const std::vector<std::pair<int, SplitSet>>& splits) {
    fs::create_directories(dir);
    json index;
    index["schema_version"] = kSchemaVersion;
    json recs = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string file = "resampled_" + std::to_string(i) + ".csv";
        write_csv_matrix(dir / file, records[i].displacement);
        recs.push_back({{"source_id", records[i].source_id},
                        {"wall_length_m", records[i].wall_length},
                        {"file", file}});
    }
    index["records"] = recs;
    json res = json::array();
    auto dump_ws = [](const WindowSet& ws) {
        json w = json::array();
        for (const auto& r : ws.windows) w.push_back({r.record, r.start, r.has_target});
        return w;
    };
    for (const auto& [t, sp] : splits) {
        json rj;
        rj["resolution"] = t;
        rj["mode"] = sp.mode == SplitMode::SequenceLevel ? "sequence" : "record";
        rj["seed"] = sp.seed;
        rj["train"] = dump_ws(sp.train);
        rj["val"] = dump_ws(sp.val);
        rj["test"] = dump_ws(sp.test);
        res.push_back(rj);
    }
    index["splits"] = res;
    std::ofstream out(dir / "index.json");
    if (!out) throw std::runtime_error("save_prep: cannot write index");
    out << index.dump(1) << "\n";
}

struct LoadedPrep {
    std::vector<ResampledRecord> records;
    std::vector<std::pair<int, SplitSet>> splits;
};

inline void load_prep(const fs::path& dir, LoadedPrep& out) {
    std::ifstream in(dir / "index.json");
    if (!in) throw std::runtime_error("load_prep: missing index in " + dir.string());
    json index = json::parse(in);
    out.records.clear();
    for (const auto& rj : index.at("records")) {
        ResampledRecord r;
        r.source_id = rj.at("source_id").get<std::string>();
        r.wall_length = rj.at("wall_length_m").get<double>();
        r.displacement = read_csv_matrix(dir / rj.at("file").get<std::string>());
        out.records.push_back(std::move(r));
    }
    out.splits.clear();
    auto parse_ws = [&out](const json& w, int t) {
        WindowSet ws;
        ws.resolution = t;
        ws.records = &out.records;
        for (const auto& e : w)
            ws.windows.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>(),
                                  e[2].get<bool>()});
        return ws;
    };
    for (const auto& rj : index.at("splits")) {
        const int t = rj.at("resolution").get<int>();
        SplitSet sp;
        sp.mode = rj.at("mode") == "sequence" ? SplitMode::SequenceLevel
                                              : SplitMode::RecordLevel;
        sp.seed = rj.at("seed").get<std::uint64_t>();
        sp.train = parse_ws(rj.at("train"), t);
        sp.val = parse_ws(rj.at("val"), t);
        sp.test = parse_ws(rj.at("test"), t);
        out.splits.emplace_back(t, std::move(sp));
    }
}

// ---------------------------------------------------------------------------
// Report CSVs and simple SVG line charts.
// ---------------------------------------------------------------------------
inline void write_step_metrics_csv(const fs::path& path,
                                   const std::vector<std::pair<std::string,
                                                               std::vector<StepMetrics>>>& by_model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_step_metrics_csv: cannot write " + path.string());
    out << "model,step,mae,r2,ioa,n\n";
    for (const auto& [model, steps] : by_model)
        for (const auto& m : steps)
            out << model << "," << m.step << "," << fmt_double(m.mean_mae) << ","
                << fmt_double(m.mean_r2) << "," << fmt_double(m.mean_ioa) << ","
                << m.sequences << "\n";
}

inline void write_contributions_csv(const fs::path& path, const ContributionTable& table,
                                    const std::vector<std::string>& model_names) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("write_contributions_csv: cannot write " + path.string());
    out << "step,model,mean_abs_shap,normalized_share,n,degenerate\n";
    for (const auto& row : table.rows)
        for (int i = 0; i < 3; ++i)
            out << row.step << "," << model_names[i] << ","
                << fmt_double(row.mean_abs_phi[i]) << "," << fmt_double(row.share[i])
                << "," << row.samples << "," << (row.degenerate ? 1 : 0) << "\n";
}

// Minimal polyline chart; a convenience view of the CSVs, never a data source.
inline void write_svg_lines(const fs::path& path, const std::string& title,
                            const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const double w = 640, h = 400, ml = 60, mr = 20, mt = 40, mb = 40;
    double lo = 0.0, hi = 1.0;
    bool first = true;
    std::size_t n = 0;
    for (const auto& [name, ys] : series)
        for (double y : ys) {
            if (first) { lo = hi = y; first = false; }
            lo = std::min(lo, y);
            hi = std::max(hi, y);
            n = std::max(n, ys.size());
        }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b"};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_svg_lines: cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
        << h << "\">\n";
    out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title
        << "</text>\n";
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr
        << "\" height=\"" << h - mt - mb << "\" fill=\"none\" stroke=\"#999\"/>\n";
    int ci = 0;
    for (const auto& [name, ys] : series) {
        out << "<polyline fill=\"none\" stroke=\"" << colors[ci % 6]
            << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < ys.size(); ++i) {
            const double x = ml + (w - ml - mr) * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5);
            const double y = h - mb - (h - mt - mb) * (ys[i] - lo) / (hi - lo);
            out << x << "," << y << " ";
        }
        out << "\"/>\n";
        out << "<text x=\"" << ml + 8 << "\" y=\"" << mt + 16 + 16 * ci << "\" fill=\""
            << colors[ci % 6] << "\">" << name << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

} // namespace wallcast
