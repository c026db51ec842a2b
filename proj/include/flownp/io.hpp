#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flownp/data.hpp"
#include "flownp/errors.hpp"
#include "flownp/model.hpp"

namespace flownp {

using json = nlohmann::json;

/// Rejects keys outside the documented schema; configs must be fully spelled.
inline void check_keys(const json& obj, const std::vector<std::string>& allowed,
                       const std::string& where) {
    if (!obj.is_object()) throw config_error(where + ": expected a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw config_error(where + ": unknown key '" + it.key() + "'");
    }
}

inline json encoding_to_json(const Encoding& e) {
    return json{{"frequencies", e.num_frequencies},
                {"min_period", e.min_period},
                {"max_period", e.max_period}};
}

inline Encoding encoding_from_json(const json& j) {
    check_keys(j, {"frequencies", "min_period", "max_period"}, "encoding");
    Encoding e;
    e.num_frequencies = j.value("frequencies", e.num_frequencies);
    e.min_period = j.value("min_period", e.min_period);
    e.max_period = j.value("max_period", e.max_period);
    e.validate();
    return e;
}

inline json model_config_to_json(const ModelConfig& c) {
    return json{{"layers", c.layers},
                {"hidden", c.hidden},
                {"heads", c.heads},
                {"encoding", encoding_to_json(c.enc)},
                {"x_dim", c.x_dim},
                {"y_dim", c.y_dim},
                {"objective", to_string(c.objective)},
                {"schedule", to_string(c.schedule)},
                {"y_mean", c.y_mean},
                {"y_std", c.y_std}};
}

inline ModelConfig model_config_from_json(const json& j) {
    check_keys(j,
               {"layers", "hidden", "heads", "encoding", "x_dim", "y_dim", "objective", "schedule",
                "y_mean", "y_std"},
               "model");
    ModelConfig c;
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    if (j.contains("encoding")) c.enc = encoding_from_json(j.at("encoding"));
    c.x_dim = j.value("x_dim", c.x_dim);
    c.y_dim = j.value("y_dim", c.y_dim);
    if (j.contains("objective")) c.objective = objective_from_string(j.at("objective"));
    if (j.contains("schedule")) c.schedule = schedule_from_string(j.at("schedule"));
    if (j.contains("y_mean")) c.y_mean = j.at("y_mean").get<std::vector<double>>();
    if (j.contains("y_std")) c.y_std = j.at("y_std").get<std::vector<double>>();
    c.validate();
    return c;
}

// ---- checkpoint container ----
// "FNPCKPT1" magic, u64 JSON-header length, JSON header (config echo + tensor
// directory), then row-major float32 payload per tensor in directory order.

inline constexpr char kCheckpointMagic[8] = {'F', 'N', 'P', 'C', 'K', 'P', 'T', '1'};

inline void save_checkpoint(const std::string& path, const VelocityModel<double>& m) {
    json header;
    header["format_version"] = 1;
    header["config"] = model_config_to_json(m.cfg);
    json dir = json::array();
    for (const auto& p : m.params) {
        dir.push_back(json{{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
    }
    header["tensors"] = dir;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw config_error("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, 8);
    const std::uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> buf;
    for (const auto& p : m.params) {
        buf.resize(static_cast<std::size_t>(p.value.size()));
        std::size_t at = 0;
        for (Eigen::Index r = 0; r < p.value.rows(); ++r)
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) buf[at++] = static_cast<float>(p.value(r, c));
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw config_error("save_checkpoint: write failed for " + path);
}

inline VelocityModel<double> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw config_error("load_checkpoint: bad magic in " + path);
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    if (!in) throw config_error("load_checkpoint: truncated header in " + path);
    json header = json::parse(hs);
    if (header.value("format_version", 0) != 1) {
        throw config_error("load_checkpoint: unsupported format_version");
    }
    VelocityModel<double> m;
    m.cfg = model_config_from_json(header.at("config"));
    std::vector<float> buf;
    for (const auto& t : header.at("tensors")) {
        NamedTensor<double> nt;
        nt.name = t.at("name").get<std::string>();
        const Eigen::Index rows = t.at("rows").get<Eigen::Index>();
        const Eigen::Index cols = t.at("cols").get<Eigen::Index>();
        nt.value.resize(rows, cols);
        buf.resize(static_cast<std::size_t>(rows * cols));
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!in) throw config_error("load_checkpoint: truncated payload in " + path);
        std::size_t at = 0;
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) nt.value(r, c) = static_cast<double>(buf[at++]);
        m.params.push_back(std::move(nt));
    }
    return m;
}

// ---- dataset records: one JSON object per line, fields {x, y, kernel_meta} ----

inline json function_sample_to_json(const FunctionSample& fs) {
    json jx = json::array(), jy = json::array();
    for (Eigen::Index i = 0; i < fs.x.rows(); ++i) {
        if (fs.x.cols() == 1) {
            jx.push_back(fs.x(i, 0));
        } else {
            json row = json::array();
            for (Eigen::Index j = 0; j < fs.x.cols(); ++j) row.push_back(fs.x(i, j));
            jx.push_back(row);
        }
        if (fs.y.cols() == 1) {
            jy.push_back(fs.y(i, 0));
        } else {
            json row = json::array();
            for (Eigen::Index j = 0; j < fs.y.cols(); ++j) row.push_back(fs.y(i, j));
            jy.push_back(row);
        }
    }
    json meta{{"process", fs.process}, {"sample_id", fs.sample_id}};
    for (const auto& [k, v] : fs.kernel_meta) meta[k] = v;
    return json{{"x", jx}, {"y", jy}, {"kernel_meta", meta}};
}

inline FunctionSample function_sample_from_json(const json& j) {
    check_keys(j, {"x", "y", "kernel_meta"}, "function record");
    const json& jx = j.at("x");
    const json& jy = j.at("y");
    if (jx.size() != jy.size()) throw config_error("function record: |x| != |y|");
    FunctionSample fs;
    const Eigen::Index n = static_cast<Eigen::Index>(jx.size());
    const Eigen::Index xd = n > 0 && jx[0].is_array() ? static_cast<Eigen::Index>(jx[0].size()) : 1;
    const Eigen::Index yd = n > 0 && jy[0].is_array() ? static_cast<Eigen::Index>(jy[0].size()) : 1;
    fs.x.resize(n, xd);
    fs.y.resize(n, yd);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (xd == 1) {
            fs.x(i, 0) = jx[static_cast<std::size_t>(i)].get<double>();
        } else {
            for (Eigen::Index d = 0; d < xd; ++d)
                fs.x(i, d) = jx[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)].get<double>();
        }
        if (yd == 1) {
            fs.y(i, 0) = jy[static_cast<std::size_t>(i)].get<double>();
        } else {
            for (Eigen::Index d = 0; d < yd; ++d)
                fs.y(i, d) = jy[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)].get<double>();
        }
    }
    if (j.contains("kernel_meta")) {
        const json& meta = j.at("kernel_meta");
        for (auto it = meta.begin(); it != meta.end(); ++it) {
            if (it.key() == "process") {
                fs.process = it.value().get<std::string>();
            } else if (it.key() == "sample_id") {
                fs.sample_id = it.value().get<std::uint64_t>();
            } else {
                fs.kernel_meta.emplace_back(it.key(), it.value().get<double>());
            }
        }
    }
    fs.validate();
    return fs;
}

inline void write_dataset(const std::string& path, const std::vector<FunctionSample>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw config_error("write_dataset: cannot open " + path);
    for (const auto& fs : records) out << function_sample_to_json(fs).dump() << "\n";
    if (!out) throw config_error("write_dataset: write failed for " + path);
}

inline std::vector<FunctionSample> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("read_dataset: cannot open " + path);
    std::vector<FunctionSample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(function_sample_from_json(json::parse(line)));
    }
    return out;
}

/// PGM (P2/P5) loader; values rescaled to [0,1]. The only image input path.
inline Mat load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("load_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P2" && magic != "P5") throw config_error("load_pgm: not a PGM file: " + path);
    auto next_int = [&in, &path]() {
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
            if (!in) throw config_error("load_pgm: truncated header in " + path);
        }
        long v = 0;
        in >> v;
        return v;
    };
    const long w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0 || maxval <= 0) throw config_error("load_pgm: bad dimensions in " + path);
    Mat out(h, w);
    if (magic == "P2") {
        for (long r = 0; r < h; ++r)
            for (long c = 0; c < w; ++c) out(r, c) = static_cast<double>(next_int()) / maxval;
    } else {
        in.get();  // single whitespace after maxval
        std::vector<unsigned char> buf(static_cast<std::size_t>(w * h));
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) throw config_error("load_pgm: truncated pixel data in " + path);
        for (long r = 0; r < h; ++r)
            for (long c = 0; c < w; ++c)
                out(r, c) = static_cast<double>(buf[static_cast<std::size_t>(r * w + c)]) / maxval;
    }
    return out;
}

}  // namespace flownp
