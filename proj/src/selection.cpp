#include "evlab/selection.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace evlab {

using nlohmann::json;

AmmVectors amm_vectors(const ShapMatrix& shap, std::span<const std::size_t> active_rows) {
    if (active_rows.empty()) throw error("amm_vectors: empty active row set");
    const std::size_t d = shap.n_features();
    AmmVectors out;
    out.range.assign(d, 0.0);
    out.above_mean_count.assign(d, 0);
    out.amm.assign(d, 0.0);

    for (std::size_t f = 0; f < d; ++f) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        for (std::size_t r : active_rows) {
            double v = shap.values[r][f];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        double mean = sum / static_cast<double>(active_rows.size());
        int count = 0;
        for (std::size_t r : active_rows) {
            if (shap.values[r][f] > mean) ++count;  // strict
        }
        out.range[f] = hi - lo;
        out.above_mean_count[f] = count;
        out.amm[f] = out.range[f] * static_cast<double>(count);
    }
    return out;
}

AmmVectors amm_vectors_full(const ShapMatrix& shap) {
    std::vector<std::size_t> all(shap.n_rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return amm_vectors(shap, all);
}

std::string patch_mode_name(PatchMode m) {
    return m == PatchMode::problem_space ? "problem_space" : "feature_space_only";
}

PatchMode patch_mode_from_name(const std::string& name) {
    if (name == "problem_space") return PatchMode::problem_space;
    if (name == "feature_space_only") return PatchMode::feature_space_only;
    throw config_error("unknown patch mode '" + name + "'");
}

FeaturePatch FeaturePatch::prefix(std::size_t n) const {
    FeaturePatch out = *this;
    if (out.pairs.size() > n) {
        out.pairs.resize(n);
        out.truncated = false;
    }
    return out;
}

FeaturePatch amm_select_core(const ShapMatrix& shap, std::span<const BoolRow> rows,
                             const std::vector<FeatureSpec>& specs, int n_pairs, PatchMode mode) {
    if (n_pairs < 1) throw error("amm_select: N must be >= 1, got " + std::to_string(n_pairs));
    if (shap.n_rows() != rows.size()) {
        throw error("amm_select: SHAP matrix has " + std::to_string(shap.n_rows()) +
                    " rows but feature matrix has " + std::to_string(rows.size()));
    }
    const std::size_t d = shap.n_features();
    if (specs.size() != d) throw error("amm_select: spec count does not match SHAP width");

    // A corpus with zero manipulable features is not an error: the loop
    // excludes every feature and terminates with an empty patch, flagged
    // truncated.
    FeaturePatch patch;
    patch.n_requested = n_pairs;

    std::vector<std::size_t> active(rows.size());
    std::iota(active.begin(), active.end(), std::size_t{0});
    std::vector<char> excluded(d, 0);
    std::size_t n_excluded = 0;

    while (patch.pairs.size() < static_cast<std::size_t>(n_pairs)) {
        if (active.size() < 2 || n_excluded == d) {
            patch.truncated = true;
            break;
        }
        AmmVectors amm = amm_vectors(shap, active);

        // argmax AMM over non-excluded features, ties to the lowest id
        int f = -1;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d; ++j) {
            if (excluded[j]) continue;
            if (amm.amm[j] > best) {
                best = amm.amm[j];
                f = static_cast<int>(j);
            }
        }

        // argmin of the SHAP column over active rows, ties to the lowest row;
        // v is that row's feature value (the most benign-oriented value that
        // exists in the problem space).
        std::size_t arg_row = active[0];
        double lowest = std::numeric_limits<double>::infinity();
        for (std::size_t r : active) {
            double val = shap.values[r][static_cast<std::size_t>(f)];
            if (val < lowest) {
                lowest = val;
                arg_row = r;
            }
        }
        const std::uint8_t v = rows[arg_row][static_cast<std::size_t>(f)];

        const bool manipulable = specs[static_cast<std::size_t>(f)].manipulable;
        const bool reachable = v == 1 || mode == PatchMode::feature_space_only;
        const bool append = manipulable && reachable;
        if (append) patch.pairs.push_back(PatchPair{f, v});
        excluded[static_cast<std::size_t>(f)] = 1;
        ++n_excluded;

        // greedy filter: keep exactly the rows whose feature value equals v
        std::vector<std::size_t> kept;
        kept.reserve(active.size());
        for (std::size_t r : active) {
            if (rows[r][static_cast<std::size_t>(f)] == v) kept.push_back(r);
        }
        active.swap(kept);

        patch.iterations.push_back(IterationLog{f, v, active.size(), manipulable, append});
    }
    return patch;
}

FeaturePatch amm_select(const Detector& model, const LabeledDataset& data, Split split,
                        int n_pairs, const ShapConfig& shap_config, PatchMode mode) {
    // Rows for the SHAP matrix and for the greedy filter must stay aligned,
    // so any row cap is applied before both.
    std::vector<BoolRow> rows;
    for (std::size_t i :
         sample_row_subset(data.indices_of(split), shap_config.row_limit, shap_config.seed)) {
        rows.push_back(data.matrix.rows[i]);
    }
    Background bg = Background::sample_train(data, shap_config.background_size, shap_config.seed);
    ShapMatrix shap = shap_matrix_rows(model, rows, bg, shap_config);
    FeaturePatch patch = amm_select_core(shap, rows, data.matrix.specs, n_pairs, mode);
    patch.source_model_digest = model.digest();
    return patch;
}

namespace {

// Threshold at the q-position of a descending positive-sum list, indexing by
// list length (percentile of the feature list, not the sample count).
double threshold_at(const std::vector<double>& sorted_desc, double q) {
    std::size_t idx = static_cast<std::size_t>(
        static_cast<double>(sorted_desc.size()) * q);
    if (idx >= sorted_desc.size()) idx = sorted_desc.size() - 1;
    return sorted_desc[idx];
}

}  // namespace

StatsSelection stats_select(const LabeledDataset& data, Split split, int n_per_side) {
    if (n_per_side < 1) throw error("stats_select: N must be >= 1");
    const std::size_t d = data.matrix.n_features();
    std::vector<double> m_sum(d, 0.0), b_sum(d, 0.0);
    std::size_t n_mal = 0, n_ben = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.split[i] != split) continue;
        auto& sums = data.labels[i] == 1 ? m_sum : b_sum;
        (data.labels[i] == 1 ? n_mal : n_ben) += 1;
        const BoolRow& row = data.matrix.rows[i];
        for (std::size_t f = 0; f < d; ++f) sums[f] += row[f];
    }
    if (n_mal == 0 || n_ben == 0) {
        throw error("stats_select: split must contain both classes");
    }

    std::vector<double> m_sorted, b_sorted;
    for (double v : m_sum) {
        if (v > 0.0) m_sorted.push_back(v);
    }
    for (double v : b_sum) {
        if (v > 0.0) b_sorted.push_back(v);
    }
    if (m_sorted.empty()) throw error("stats_select: no positive sums in the malicious class");
    if (b_sorted.empty()) throw error("stats_select: no positive sums in the benign class");
    std::sort(m_sorted.rbegin(), m_sorted.rend());
    std::sort(b_sorted.rbegin(), b_sorted.rend());

    StatsSelection sel;
    sel.m_top = threshold_at(m_sorted, 0.1);
    sel.m_bottom = threshold_at(m_sorted, 0.9);
    sel.b_top = threshold_at(b_sorted, 0.1);
    sel.b_bottom = threshold_at(b_sorted, 0.9);

    for (std::size_t f = 0; f < d; ++f) {
        if (b_sum[f] >= sel.b_top && m_sum[f] <= sel.m_bottom &&
            sel.benign_features.size() < static_cast<std::size_t>(n_per_side)) {
            sel.benign_features.push_back(static_cast<int>(f));
        }
        if (m_sum[f] >= sel.m_top && b_sum[f] <= sel.b_bottom &&
            sel.malicious_features.size() < static_cast<std::size_t>(n_per_side)) {
            sel.malicious_features.push_back(static_cast<int>(f));
        }
    }
    return sel;
}

FeaturePatch stats_patch(const StatsSelection& selection, const std::vector<FeatureSpec>& specs,
                         PatchMode mode) {
    FeaturePatch patch;
    patch.n_requested = static_cast<int>(selection.benign_features.size() +
                                         selection.malicious_features.size());
    auto consider = [&](int f, std::uint8_t v) {
        const FeatureSpec& spec = specs[static_cast<std::size_t>(f)];
        const bool reachable = v == 1 || mode == PatchMode::feature_space_only;
        bool append = spec.manipulable && reachable;
        if (append) patch.pairs.push_back(PatchPair{f, v});
        patch.iterations.push_back(IterationLog{f, v, 0, spec.manipulable, append});
    };
    for (int f : selection.benign_features) consider(f, 1);
    for (int f : selection.malicious_features) consider(f, 0);
    return patch;
}

void save_patch(const FeaturePatch& patch, const std::string& path) {
    json pairs = json::array();
    for (const PatchPair& p : patch.pairs) pairs.push_back(json::array({p.feature, p.value}));
    json iters = json::array();
    for (const IterationLog& it : patch.iterations) {
        iters.push_back(json{{"feature", it.feature},
                             {"value", it.value},
                             {"rows_remaining", it.rows_remaining},
                             {"manipulable", it.manipulable},
                             {"appended", it.appended}});
    }
    json j{{"format", "evlab-patch/1"},
           {"pairs", std::move(pairs)},
           {"source_model_digest", patch.source_model_digest},
           {"config_digest", patch.config_digest},
           {"n_requested", patch.n_requested},
           {"truncated", patch.truncated},
           {"iterations", std::move(iters)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

FeaturePatch load_patch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open '" + path + "' for reading");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw parse_error("malformed patch file '" + path + "': " + e.what());
    }
    if (!j.contains("format") || j.at("format").get<std::string>() != "evlab-patch/1") {
        throw parse_error("unsupported patch format in '" + path + "'");
    }
    FeaturePatch patch;
    for (const json& p : j.at("pairs")) {
        patch.pairs.push_back(PatchPair{p.at(0).get<int>(), p.at(1).get<std::uint8_t>()});
    }
    patch.source_model_digest = j.at("source_model_digest").get<std::string>();
    if (j.contains("config_digest")) patch.config_digest = j.at("config_digest").get<std::string>();
    patch.n_requested = j.at("n_requested").get<int>();
    patch.truncated = j.at("truncated").get<bool>();
    if (j.contains("iterations")) {
        for (const json& it : j.at("iterations")) {
            patch.iterations.push_back(IterationLog{
                it.at("feature").get<int>(), it.at("value").get<std::uint8_t>(),
                it.at("rows_remaining").get<std::size_t>(), it.at("manipulable").get<bool>(),
                it.at("appended").get<bool>()});
        }
    }
    return patch;
}

}  // namespace evlab
