#include "evlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace evlab {

using nlohmann::json;

void validate_specs(const std::vector<FeatureSpec>& specs) {
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const FeatureSpec& s = specs[i];
        if (s.id != static_cast<int>(i)) {
            throw config_error("feature ids must be dense: spec at position " +
                               std::to_string(i) + " has id " + std::to_string(s.id));
        }
        if (!names.insert(s.name).second) {
            throw config_error("duplicate feature name '" + s.name + "'");
        }
        if (!valid_token(s.name)) {
            throw config_error("feature name is not a valid token: '" + s.name + "'");
        }
        if (s.additive_only && !s.manipulable) {
            throw config_error("feature " + std::to_string(s.id) +
                               " is additive_only but not manipulable");
        }
    }
}

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw parse_error("unknown split tag '" + name + "'");
}

std::vector<std::size_t> LabeledDataset::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> LabeledDataset::indices_of(Split s, int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (split[i] == s && labels[i] == label) out.push_back(i);
    }
    return out;
}

void SynthConfig::validate() const {
    if (n_samples < 3) {
        throw config_error("n_samples must be >= 3, got " + std::to_string(n_samples));
    }
    if (n_features == 0) {
        throw config_error("n_features must be >= 1");
    }
    if (!(p_noise > 0.0)) {
        throw config_error("p_noise must satisfy 0 < p_noise, got " + format_double(p_noise));
    }
    if (!(p_noise < p_signal)) {
        throw config_error("p_noise must be < p_signal, got p_noise=" + format_double(p_noise) +
                           " p_signal=" + format_double(p_signal));
    }
    if (!(p_signal <= 1.0)) {
        throw config_error("p_signal must be <= 1, got " + format_double(p_signal));
    }
    if (n_planted_malicious + n_planted_benign >= n_features) {
        throw config_error("planted feature count " +
                           std::to_string(n_planted_malicious + n_planted_benign) +
                           " must be < n_features " + std::to_string(n_features));
    }
    if (!(class_balance > 0.0 && class_balance < 1.0)) {
        throw config_error("class_balance must be in (0,1), got " + format_double(class_balance));
    }
}

namespace {

std::vector<FeatureSpec> make_synth_specs(const SynthConfig& config) {
    std::vector<FeatureSpec> specs(config.n_features);
    for (std::size_t f = 0; f < config.n_features; ++f) {
        FeatureSpec& s = specs[f];
        s.id = static_cast<int>(f);
        const char* role = "noise";
        if (f < config.n_planted_malicious) {
            role = "mal";
        } else if (f < config.n_planted_malicious + config.n_planted_benign) {
            role = "ben";
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s/%s.f%04zu",
                      std::string(kFeatureFamilies[f % kFeatureFamilies.size()]).c_str(), role, f);
        s.name = buf;
        s.family = std::string(kFeatureFamilies[f % kFeatureFamilies.size()]);
        s.manipulable = true;
        s.additive_only = true;
    }
    return specs;
}

}  // namespace

SynthOutput generate_synthetic(const SynthConfig& config) {
    config.validate();
    Rng rng(derive_seed(config.seed, seed_stream::dataset));

    SynthOutput out;
    LabeledDataset& ds = out.dataset;
    ds.matrix.specs = make_synth_specs(config);
    validate_specs(ds.matrix.specs);

    const std::size_t n = config.n_samples;
    const std::size_t d = config.n_features;
    const std::size_t n_mal = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * config.class_balance));

    ds.matrix.rows.resize(n);
    ds.matrix.sample_ids.resize(n);
    ds.labels.resize(n);
    ds.split.assign(n, Split::train);
    out.samples.resize(n);

    const std::size_t pm = config.n_planted_malicious;
    const std::size_t pb = config.n_planted_benign;

    for (std::size_t i = 0; i < n; ++i) {
        int label = i < n_mal ? 1 : 0;
        ds.labels[i] = label;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "s%06zu", i);
        ds.matrix.sample_ids[i] = idbuf;

        BoolRow row(d, 0);
        for (std::size_t f = 0; f < d; ++f) {
            double p = config.p_noise;
            if (f < pm) {
                p = label == 1 ? config.p_signal : config.p_noise;
            } else if (f < pm + pb) {
                p = label == 0 ? config.p_signal : config.p_noise;
            }
            row[f] = rng.bernoulli(p) ? 1 : 0;
        }
        ds.matrix.rows[i] = std::move(row);

        ProblemSample& ps = out.samples[i];
        ps.sample_id = ds.matrix.sample_ids[i];
        for (std::size_t f = 0; f < d; ++f) {
            if (ds.matrix.rows[i][f]) ps.live_tokens.push_back(ds.matrix.specs[f].name);
        }
    }
    return out;
}

BoolRow vectorize(const ProblemSample& sample, const std::vector<FeatureSpec>& specs) {
    std::unordered_map<std::string_view, std::size_t> index;
    index.reserve(specs.size());
    for (const FeatureSpec& s : specs) index.emplace(s.name, static_cast<std::size_t>(s.id));

    BoolRow row(specs.size(), 0);
    auto mark = [&](const std::string& token) {
        auto it = index.find(std::string_view(token));
        if (it != index.end()) row[it->second] = 1;
        // unknown tokens are ignored: the extractor only reports its vocabulary
    };
    for (const std::string& t : sample.live_tokens) mark(t);
    for (const std::string& t : sample.dead_tokens) mark(t);
    return row;
}

void assign_splits(LabeledDataset& dataset, const std::array<double, 3>& ratios,
                   std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw config_error("split ratios must sum to 1 within 1e-9, got " + format_double(sum));
    }
    for (double r : ratios) {
        if (r < 0.0) throw config_error("split ratios must be non-negative");
    }
    if (dataset.size() < 3) {
        throw config_error("need at least 3 samples to split, got " +
                           std::to_string(dataset.size()));
    }

    Rng rng(derive_seed(seed, seed_stream::split));
    // Stratified: shuffle each class separately, then cut by cumulative ratio.
    for (int label : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset.labels[i] == label) idx.push_back(i);
        }
        rng.shuffle(idx);
        const std::size_t m = idx.size();
        const std::size_t n_train = static_cast<std::size_t>(
            std::llround(ratios[0] * static_cast<double>(m)));
        const std::size_t n_val = static_cast<std::size_t>(
            std::llround((ratios[0] + ratios[1]) * static_cast<double>(m))) - n_train;
        for (std::size_t k = 0; k < m; ++k) {
            Split s = Split::test;
            if (k < n_train) {
                s = Split::train;
            } else if (k < n_train + n_val) {
                s = Split::val;
            }
            dataset.split[idx[k]] = s;
        }
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

json specs_to_json(const std::vector<FeatureSpec>& specs) {
    json arr = json::array();
    for (const FeatureSpec& s : specs) {
        arr.push_back(json{{"id", s.id},
                           {"name", s.name},
                           {"family", s.family},
                           {"manipulable", s.manipulable},
                           {"additive_only", s.additive_only}});
    }
    return arr;
}

std::vector<FeatureSpec> specs_from_json(const json& arr) {
    std::vector<FeatureSpec> specs;
    for (const json& j : arr) {
        FeatureSpec s;
        s.id = j.at("id").get<int>();
        s.name = j.at("name").get<std::string>();
        s.family = j.at("family").get<std::string>();
        s.manipulable = j.at("manipulable").get<bool>();
        s.additive_only = j.at("additive_only").get<bool>();
        specs.push_back(std::move(s));
    }
    return specs;
}

}  // namespace

void save_csv(const LabeledDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");

    out << "sample_id,label,split";
    for (const FeatureSpec& s : dataset.matrix.specs) out << ',' << s.name;
    out << '\n';
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out << dataset.matrix.sample_ids[i] << ',' << dataset.labels[i] << ','
            << split_name(dataset.split[i]);
        const BoolRow& row = dataset.matrix.rows[i];
        for (std::uint8_t v : row) out << ',' << (v ? '1' : '0');
        out << '\n';
    }
    if (!out) throw error("failed writing '" + path + "'");
    out.close();

    std::ofstream side(path + ".specs.json", std::ios::binary);
    if (!side) throw error("cannot open '" + path + ".specs.json' for writing");
    side << specs_to_json(dataset.matrix.specs).dump(2) << '\n';
}

LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open '" + path + "' for reading");

    std::ifstream side(path + ".specs.json", std::ios::binary);
    if (!side) throw error("missing specs sidecar '" + path + ".specs.json'");
    json sidecar = json::parse(side, nullptr, true);

    LabeledDataset ds;
    ds.matrix.specs = specs_from_json(sidecar);
    validate_specs(ds.matrix.specs);
    const std::size_t d = ds.matrix.specs.size();

    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ":1: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() != d + 3 || header[0] != "sample_id" || header[1] != "label" ||
        header[2] != "split") {
        throw parse_error(path + ":1: malformed header, expected sample_id,label,split,<" +
                          std::to_string(d) + " feature names>");
    }
    for (std::size_t f = 0; f < d; ++f) {
        if (header[f + 3] != ds.matrix.specs[f].name) {
            throw parse_error(path + ":1: header/spec mismatch at column " +
                              std::to_string(f + 3) + ": '" + header[f + 3] +
                              "' vs spec '" + ds.matrix.specs[f].name + "'");
        }
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != d + 3) {
            throw parse_error(path + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(d + 3) + " cells, got " +
                              std::to_string(cells.size()));
        }
        ds.matrix.sample_ids.push_back(cells[0]);
        if (cells[1] != "0" && cells[1] != "1") {
            throw parse_error(path + ":" + std::to_string(lineno) + ": label must be 0 or 1, got '" +
                              cells[1] + "'");
        }
        ds.labels.push_back(cells[1] == "1" ? 1 : 0);
        ds.split.push_back(split_from_name(cells[2]));
        BoolRow row(d, 0);
        for (std::size_t f = 0; f < d; ++f) {
            const std::string& cell = cells[f + 3];
            if (cell == "0") {
                row[f] = 0;
            } else if (cell == "1") {
                row[f] = 1;
            } else {
                throw parse_error(path + ":" + std::to_string(lineno) + ": cell in column " +
                                  std::to_string(f + 3) + " must be 0 or 1, got '" + cell + "'");
            }
        }
        ds.matrix.rows.push_back(std::move(row));
    }
    return ds;
}

bool valid_token(const std::string& token) {
    if (token.empty()) return false;
    for (char c : token) {
        bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == ':' || c == '.' || c == '/' || c == '-';
        if (!ok) return false;
    }
    return true;
}

std::string samp_to_string(const ProblemSample& sample) {
    std::string out = "SAMP 1 " + sample.sample_id + "\n";
    for (const std::string& t : sample.live_tokens) {
        out += t;
        out += '\n';
    }
    if (!sample.dead_tokens.empty()) {
        out += "#DEAD\n";
        for (const std::string& t : sample.dead_tokens) {
            out += t;
            out += '\n';
        }
    }
    return out;
}

ProblemSample samp_from_string(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw parse_error(origin + ":1: empty SAMP file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    ProblemSample sample;
    {
        std::istringstream hdr(line);
        std::string magic, version;
        hdr >> magic >> version >> sample.sample_id;
        if (magic != "SAMP" || version != "1" || sample.sample_id.empty()) {
            throw parse_error(origin + ":1: expected 'SAMP 1 <sample_id>', got '" + line + "'");
        }
    }

    bool in_dead = false;
    std::size_t lineno = 1;
    std::unordered_set<std::string> live_seen, dead_seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line == "#DEAD") {
            if (in_dead) {
                throw parse_error(origin + ":" + std::to_string(lineno) + ": duplicate #DEAD marker");
            }
            in_dead = true;
            continue;
        }
        if (!valid_token(line)) {
            throw parse_error(origin + ":" + std::to_string(lineno) + ": invalid token '" + line + "'");
        }
        auto& seen = in_dead ? dead_seen : live_seen;
        if (!seen.insert(line).second) {
            throw parse_error(origin + ":" + std::to_string(lineno) + ": duplicate token '" + line +
                              "' within section");
        }
        (in_dead ? sample.dead_tokens : sample.live_tokens).push_back(line);
    }
    if (in_dead && sample.dead_tokens.empty()) {
        throw parse_error(origin + ": #DEAD marker present but dead section is empty");
    }
    return sample;
}

void save_samp(const ProblemSample& sample, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");
    out << samp_to_string(sample);
    if (!out) throw error("failed writing '" + path + "'");
}

ProblemSample load_samp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return samp_from_string(ss.str(), path);
}

}  // namespace evlab
