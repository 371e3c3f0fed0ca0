#ifndef EVLAB_SAGE_HPP
#define EVLAB_SAGE_HPP

#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "evlab/attribution.hpp"
#include "evlab/common.hpp"
#include "evlab/dataset.hpp"
#include "evlab/detectors.hpp"

namespace evlab {

enum class SageLoss { cross_entropy, zero_one };

std::string loss_name(SageLoss l);
SageLoss loss_from_name(const std::string& name);

// Marginal-imputation restricted model: mean raw score over draws where
// features in S keep x's values and the rest take values from background
// rows. n_draws == 0 or >= background size enumerates the whole background.
// S == full set shortcuts to the model score (no draws, zero variance).
double restricted_score(const Detector& model, std::span<const std::uint8_t> x,
                        const std::vector<int>& subset, const Background& bg, int n_draws,
                        std::uint64_t seed);

struct SageConfig {
    SageLoss loss = SageLoss::cross_entropy;
    int n_permutations = 16;
    // Imputation draws per step; 0 enumerates the background exhaustively.
    int n_marginal_draws = 1;
    std::uint64_t seed = 0;
};

// v_f(S): mean-prediction loss minus restricted-model loss over the rows.
// v_f(empty) == 0 by construction.
double predictive_power(const Detector& model, std::span<const BoolRow> rows,
                        std::span<const int> labels, const std::vector<int>& subset,
                        const Background& bg, const SageConfig& config);

struct SageReport {
    std::vector<double> values;
    std::vector<double> std_errors;  // over permutations
    double v_full = 0.0;
    double v_empty = 0.0;  // 0 by definition
    std::string loss;
    int n_permutations = 0;
    std::uint64_t seed = 0;
    std::string model_digest;
    std::string background_digest;
    std::string config_digest;

    // Feature ids sorted by descending SAGE value (ties to the lowest id).
    std::vector<int> ranking() const;
};

// Permutation-sampling estimator of the Shapley allocation of predictive
// power. The endpoints of every permutation walk use the exact mean
// prediction and the exact model loss, so the values sum to v_full exactly.
SageReport sage_values(const Detector& model, std::span<const BoolRow> rows,
                       std::span<const int> labels, const Background& bg,
                       const SageConfig& config);
SageReport sage_values_split(const Detector& model, const LabeledDataset& data, Split split,
                             const Background& bg, const SageConfig& config);

void save_sage_report(const SageReport& report, const std::string& path);

// Detector wrapper that drops the excluded columns before scoring; its
// predictions are invariant to excluded-feature values by construction.
class ReducedInputDetector : public Detector {
  public:
    ReducedInputDetector(std::unique_ptr<Detector> inner, std::vector<int> excluded,
                         std::size_t full_width);

    DetectorKind kind() const override { return inner_->kind(); }
    std::size_t n_features() const override { return full_width_; }
    double raw_score(std::span<const std::uint8_t> row) const override;
    double probability_from_raw(double raw) const override {
        return inner_->probability_from_raw(raw);
    }
    nlohmann::json to_json() const override;

    const std::vector<int>& excluded() const { return excluded_; }
    const Detector& inner() const { return *inner_; }

  private:
    std::unique_ptr<Detector> inner_;
    std::vector<int> excluded_;         // sorted
    std::vector<std::size_t> keep_;     // column map full -> reduced
    std::size_t full_width_ = 0;
};

struct ImprovedDetector {
    std::unique_ptr<ReducedInputDetector> model;
    std::vector<int> excluded_features;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

// Removes the top-k ranked features from every split and retrains the base
// kind. Requires 0 < k < d.
ImprovedDetector exclude_and_retrain(const LabeledDataset& data, const std::vector<int>& ranked,
                                     std::size_t k, DetectorKind kind,
                                     const nlohmann::json& hyperparams, std::uint64_t seed);

std::unique_ptr<Detector> reduced_model_from_json(const nlohmann::json& j);

}  // namespace evlab

#endif
