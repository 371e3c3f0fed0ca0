#ifndef EVLAB_PIPELINE_HPP
#define EVLAB_PIPELINE_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "evlab/config.hpp"
#include "evlab/evaluation.hpp"
#include "evlab/sage.hpp"

namespace evlab {

// In-memory experiment state shared by the CLI stages.
struct Experiment {
    ExperimentConfig config;
    LabeledDataset data;
    std::vector<ProblemSample> samples;  // aligned with dataset rows
    std::vector<std::string> model_names;
    std::vector<std::unique_ptr<Detector>> models;
    std::vector<FitResult> fits;  // models moved out; accuracy fields remain

    std::uint64_t model_seed(std::size_t i) const {
        return derive_seed(config.master_seed, seed_stream::model_base + i);
    }
    ShapConfig shap_config() const;  // config.shap with the derived attack seed
    std::vector<NamedModel> named_models() const;
};

Experiment load_or_generate_dataset(const ExperimentConfig& config);
void train_models(Experiment& exp);

// Per-k hardening comparison: the base model's AMM-ranked exclusion vs the
// SAGE-ranked exclusion, both evaluated on the adversarial samples that
// evaded the base model.
struct HardeningRow {
    std::size_t k = 0;
    double amm_seed_detection = 0.0;
    double amm_adv_detection = 0.0;  // on base-evading adversarial samples
    double sage_seed_detection = 0.0;
    double sage_adv_detection = 0.0;
};

struct HardeningReport {
    std::string base_model;
    std::string config_digest;
    double base_seed_detection = 0.0;
    double base_adv_detection = 0.0;
    std::size_t n_evading = 0;
    std::vector<HardeningRow> rows;
    std::vector<int> amm_ranking;   // descending AMM
    std::vector<int> sage_ranking;  // descending SAGE value

    nlohmann::json to_json() const;
};

HardeningReport hardening_eval(const Experiment& exp, std::size_t base_index);

// Full pipeline into out_dir: dataset, models, SHAP matrix, patches,
// adversarial samples, evaluation report, transfer matrix, SAGE report,
// hardening comparison, and a run manifest. Refuses an out_dir whose
// manifest carries a different config hash unless force is set.
struct ReproResult {
    std::vector<std::string> artifacts;
    std::string manifest_path;
};

ReproResult run_repro(const ExperimentConfig& config, const std::string& out_dir,
                      const EmitFormats& formats, bool force);

}  // namespace evlab

#endif
