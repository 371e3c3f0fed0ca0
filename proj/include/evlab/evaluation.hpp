#ifndef EVLAB_EVALUATION_HPP
#define EVLAB_EVALUATION_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evlab/attribution.hpp"
#include "evlab/common.hpp"
#include "evlab/dataset.hpp"
#include "evlab/detectors.hpp"
#include "evlab/manipulation.hpp"
#include "evlab/selection.hpp"

namespace evlab {

struct NamedModel {
    std::string name;
    const Detector* model = nullptr;
};

enum class AttackStrategy { amm, stats };

std::string strategy_name(AttackStrategy s);
AttackStrategy strategy_from_name(const std::string& name);

struct AttackOutcome {
    std::string strategy;
    std::string model_name;
    std::string model_digest;
    double seed_rate = 0.0;
    double adversarial_rate = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_pairs = 0;              // applied patch length
    std::size_t n_skipped_applications = 0;  // per-sample skipped pair count, summed
};

struct CurvePoint {
    int n = 0;
    double rate = 0.0;
};

struct CaseTracePoint {
    int n = 0;
    double raw_score = 0.0;
    double probability = 0.0;
    int label = 0;
};

struct CaseTrace {
    std::string sample_id;
    std::vector<CaseTracePoint> points;  // N = 0 .. N_max
    int first_evasion_n = -1;
    std::vector<double> phi_before;  // attribution at N = 0
    std::vector<double> phi_after;   // attribution at N = N_max
    std::vector<double> decision_function;  // linear_svm only: margin per N
};

struct TransferMatrix {
    std::vector<std::string> generator_names;
    std::vector<std::string> generator_digests;
    std::vector<std::string> target_names;
    std::vector<std::string> target_digests;
    std::vector<std::vector<double>> rates;   // [generator][target]
    std::vector<std::vector<double>> cosine;  // over top-k AMM vectors
};

struct EvalReport {
    std::string config_digest;
    int attack_n = 0;
    std::vector<AttackOutcome> outcomes;
    std::string curve_model;
    std::vector<CurvePoint> rate_vs_n;
    double drop_bin_width = 10.0;
    std::map<int, int> drop_bins;                 // amm strategy, bins keyed by upper edge (pp)
    std::vector<std::string> drop_excluded;       // detectors under the 50% seed-rate floor
    std::vector<CaseTrace> case_traces;

    nlohmann::json to_json() const;
};

// Detection rates of seed vs adversarial samples for every strategy/model
// pair. AMM patches are generated per model on the train split; the stats
// patch is model-independent. Adversarial samples go through the
// problem-space builder and every built sample must pass
// verify_functionality before it is counted.
std::vector<AttackOutcome> run_attack_eval(const std::vector<NamedModel>& models,
                                           const LabeledDataset& data,
                                           const std::vector<ProblemSample>& samples,
                                           const std::set<AttackStrategy>& strategies, int n_pairs,
                                           const ShapConfig& shap_config);

// Detection rate per N over fixed seed sets (n_sets x set_size malicious test
// samples). One greedy run at max(N) supplies every prefix. N_list must be
// ascending with no duplicates; N = 0 is the seed rate.
std::vector<CurvePoint> rate_vs_n_curve(const NamedModel& model, const LabeledDataset& data,
                                        const std::vector<ProblemSample>& samples,
                                        const std::vector<int>& n_list, std::size_t n_sets,
                                        std::size_t set_size, const ShapConfig& shap_config);

// rates[i][j]: detection rate on target j of samples generated on i.
// cosine[i][j]: cosine of the two AMM vectors restricted to the union of each
// pair's top_k features (zero-filled outside each model's own top-k set).
TransferMatrix transfer_eval(const std::vector<NamedModel>& models, const LabeledDataset& data,
                             const std::vector<ProblemSample>& samples, int n_pairs,
                             std::size_t top_k, const ShapConfig& shap_config);

// Cosine of AMM vectors under the union-of-top-k alignment (exposed for
// tests; transfer_eval uses it per cell).
double amm_topk_cosine(const std::vector<double>& amm_a, const std::vector<double>& amm_b,
                       std::size_t top_k);

// Histogram of per-detector drops in percentage points. A drop of x lands in
// the bin labeled ceil(x / width) * width; detectors with a seed rate below
// 0.5 are excluded.
std::map<int, int> drop_histogram(const std::vector<double>& seed_rates,
                                  const std::vector<double>& adv_rates, double bin_width,
                                  std::vector<std::size_t>* excluded = nullptr);

// Score trajectory of one malicious sample while the patch prefix grows from
// 0 to n_max pairs, plus attributions before/after. Throws if the sample is
// not malicious under the model at N = 0.
CaseTrace case_trace(const NamedModel& model, const FeaturePatch& patch,
                     const ProblemSample& sample, const std::vector<FeatureSpec>& specs,
                     int n_max, const Background& bg, const ShapConfig& shap_config);

// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct EmitFormats {
    bool json = true;
    bool csv = false;
    bool svg = false;
};

EmitFormats formats_from_string(const std::string& csv_list);

// Writes report.json / *.csv / *.svg under dir. Output bytes are a pure
// function of the report contents.
std::vector<std::string> emit_report(const EvalReport& report, const std::string& dir,
                                     const EmitFormats& formats);
std::vector<std::string> emit_transfer(const TransferMatrix& matrix, const std::string& dir,
                                       const EmitFormats& formats);

nlohmann::json transfer_to_json(const TransferMatrix& matrix);

}  // namespace evlab

#endif
