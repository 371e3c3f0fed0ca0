#ifndef EVLAB_CONFIG_HPP
#define EVLAB_CONFIG_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evlab/attribution.hpp"
#include "evlab/dataset.hpp"
#include "evlab/detectors.hpp"
#include "evlab/sage.hpp"

namespace evlab {

struct ModelConfig {
    std::string name;
    DetectorKind kind = DetectorKind::gbdt;
    nlohmann::json hyperparams = nlohmann::json::object();
};

struct SageSection {
    SageLoss loss = SageLoss::cross_entropy;
    int n_permutations = 12;
    int n_marginal_draws = 1;
    std::vector<std::size_t> k_list = {5, 10, 20, 40};
    std::size_t row_limit = 200;  // evaluation rows used for SAGE estimation
};

// One experiment = dataset + model zoo + attack + evaluation knobs. All
// sub-seeds derive from master_seed (see seed_stream); a SynthConfig without
// an explicit seed inherits master_seed.
struct ExperimentConfig {
    std::optional<SynthConfig> synth;  // exactly one of synth / dataset_csv
    std::string dataset_csv;

    std::array<double, 3> split_ratios = {0.5, 0.2, 0.3};
    std::vector<ModelConfig> models;

    std::vector<std::string> attack_strategies = {"amm", "stats"};
    int attack_n = 30;
    ShapConfig shap;  // seed filled from master_seed by the pipeline

    std::vector<int> curve_n_list = {0, 5, 10, 20, 40};
    std::size_t curve_n_sets = 4;
    std::size_t curve_set_size = 50;
    std::size_t n_case_traces = 2;

    std::vector<std::string> transfer_models;  // empty = all configured models
    std::size_t transfer_top_k = 40;

    SageSection sage;

    std::string output_dir = "out";
    std::uint64_t master_seed = 7;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
    nlohmann::json to_json() const;

    // FNV hash of the canonical JSON dump; embedded in every JSON artifact.
    std::string digest() const;

    void validate() const;
};

// The packaged default experiment (the reference synthetic corpus and the
// four detector kinds).
ExperimentConfig default_config();

}  // namespace evlab

#endif
