#ifndef EVLAB_DATASET_HPP
#define EVLAB_DATASET_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evlab/common.hpp"

namespace evlab {

// The 8 feature families used for reporting breakdowns. Presence in a family
// carries no behavior beyond grouping in reports.
inline constexpr std::array<std::string_view, 8> kFeatureFamilies = {
    "hardware", "perm_requested", "app_component", "intent",
    "api_restricted", "perm_used", "api_suspicious", "url",
};

struct FeatureSpec {
    int id = 0;
    std::string name;
    std::string family;
    bool manipulable = true;
    // When set, the feature value can only be changed from 0 to 1.
    bool additive_only = true;
};

// Checks density/uniqueness invariants; throws config_error on violation.
void validate_specs(const std::vector<FeatureSpec>& specs);

// A sample in the textual problem space. The live section is the functional
// part and is never modified by any attack operation; the dead section is
// statically visible but unreachable and may only grow.
struct ProblemSample {
    std::string sample_id;
    std::vector<std::string> live_tokens;
    std::vector<std::string> dead_tokens;
};

struct FeatureMatrix {
    std::vector<BoolRow> rows;
    std::vector<FeatureSpec> specs;
    std::vector<std::string> sample_ids;

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_features() const { return specs.size(); }
};

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct LabeledDataset {
    FeatureMatrix matrix;
    std::vector<int> labels;        // 0 = benign, 1 = malicious
    std::vector<Split> split;       // per-sample tag

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> indices_of(Split s) const;
    std::vector<std::size_t> indices_of(Split s, int label) const;
};

struct SynthConfig {
    std::size_t n_samples = 2000;
    std::size_t n_features = 300;
    std::size_t n_planted_malicious = 20;
    std::size_t n_planted_benign = 20;
    double p_signal = 0.8;  // presence probability of a planted feature in its class
    double p_noise = 0.1;   // presence probability everywhere else
    double class_balance = 0.5;  // fraction of malicious samples
    std::uint64_t seed = 7;

    void validate() const;  // throws config_error naming the violated bound
};

struct SynthOutput {
    LabeledDataset dataset;
    std::vector<ProblemSample> samples;
};

// Deterministic per config.seed. Planted malicious features occupy ids
// [0, n_planted_malicious); planted benign ids follow; the rest are noise
// present with p_noise in both classes. Every generated ProblemSample
// vectorizes back to its matrix row.
SynthOutput generate_synthetic(const SynthConfig& config);

// row[f] = 1 iff specs[f].name appears in live or dead tokens. Unknown tokens
// are ignored (the extractor only knows its own vocabulary).
BoolRow vectorize(const ProblemSample& sample, const std::vector<FeatureSpec>& specs);

// Stratified by label, deterministic per seed. Ratios must sum to 1 within
// 1e-9; needs at least 3 samples.
void assign_splits(LabeledDataset& dataset, const std::array<double, 3>& ratios,
                   std::uint64_t seed);

// CSV layout: header "sample_id,label,split,<feature names...>", feature cells
// are literal 0/1. Feature metadata (family/manipulability) travels in a JSON
// sidecar at path + ".specs.json" so the round trip is lossless.
void save_csv(const LabeledDataset& dataset, const std::string& path);
LabeledDataset load_csv(const std::string& path);

// SAMP v1: line 1 "SAMP 1 <sample_id>", one token per line, "#DEAD" separates
// live from dead (absent when the dead section is empty).
std::string samp_to_string(const ProblemSample& sample);
ProblemSample samp_from_string(const std::string& text, const std::string& origin = "<memory>");
void save_samp(const ProblemSample& sample, const std::string& path);
ProblemSample load_samp(const std::string& path);

bool valid_token(const std::string& token);

}  // namespace evlab

#endif
