#ifndef EVLAB_DETECTORS_HPP
#define EVLAB_DETECTORS_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evlab/common.hpp"
#include "evlab/dataset.hpp"

namespace evlab {

enum class DetectorKind { gbdt, linear_svm, random_forest, mlp };

std::string kind_name(DetectorKind k);
DetectorKind kind_from_name(const std::string& name);

struct Prediction {
    double raw_score = 0.0;
    double probability = 0.0;
    int label = 0;  // probability >= 0.5 maps to 1 (ties are flagged malicious)
};

struct LinearWeights {
    std::vector<double> weights;
    double bias = 0.0;

    double decision(std::span<const std::uint8_t> row) const;
};

// Fitted, immutable scoring model. raw_score is the margin/logit; probability
// is a monotone map of it.
class Detector {
  public:
    virtual ~Detector() = default;

    virtual DetectorKind kind() const = 0;
    virtual std::size_t n_features() const = 0;
    virtual double raw_score(std::span<const std::uint8_t> row) const = 0;
    virtual double probability_from_raw(double raw) const;  // sigmoid unless overridden
    virtual nlohmann::json to_json() const = 0;

    Prediction predict(std::span<const std::uint8_t> row) const;
    std::string digest() const;
};

struct FitResult {
    std::unique_ptr<Detector> model;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;   // NaN when the val split is empty
    double final_loss = 0.0;     // training objective at the last step
};

// Trains on the dataset's train split; reports accuracy on the val split.
// Hyperparameters are a kind-specific JSON object; missing keys take the
// desk-scale defaults. Throws config_error on a single-class training set.
FitResult fit_detector(DetectorKind kind, const nlohmann::json& hyperparams,
                       const LabeledDataset& data, std::uint64_t seed);

double detection_rate(const Detector& model, std::span<const BoolRow> rows);
double accuracy(const Detector& model, const LabeledDataset& data, Split split);

// Only valid for linear_svm; throws error otherwise.
LinearWeights linear_weights(const Detector& model);

// Versioned JSON model file ("evlab-model/1"); parameters are stored as
// decimal strings so a reload reproduces raw scores bit-exactly.
void save_model(const Detector& model, const std::string& path);
std::unique_ptr<Detector> load_model(const std::string& path);
// Checked variants refuse a file whose kind differs from the expected one.
std::unique_ptr<Detector> load_model(const std::string& path, DetectorKind expected);
std::unique_ptr<Detector> model_from_json(const nlohmann::json& j);

// --- concrete models -------------------------------------------------------

// Regression tree node; leaves have feature == -1. Boolean split: value 0
// goes left, 1 goes right.
struct TreeNode {
    int feature = -1;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double eval(std::span<const std::uint8_t> row) const;
};

class GbdtModel : public Detector {
  public:
    DetectorKind kind() const override { return DetectorKind::gbdt; }
    std::size_t n_features() const override { return n_features_; }
    double raw_score(std::span<const std::uint8_t> row) const override;
    nlohmann::json to_json() const override;

    // Raw score after each boosting round (index 0 = base score only).
    std::vector<double> staged_scores(std::span<const std::uint8_t> row) const;
    const std::vector<Tree>& trees() const { return trees_; }
    double base_score() const { return base_score_; }
    double learning_rate() const { return learning_rate_; }

    std::size_t n_features_ = 0;
    double base_score_ = 0.0;
    double learning_rate_ = 0.0;
    std::vector<Tree> trees_;
};

class LinearSvmModel : public Detector {
  public:
    DetectorKind kind() const override { return DetectorKind::linear_svm; }
    std::size_t n_features() const override { return weights_.size(); }
    double raw_score(std::span<const std::uint8_t> row) const override;
    nlohmann::json to_json() const override;

    std::vector<double> weights_;
    double bias_ = 0.0;
};

class RandomForestModel : public Detector {
  public:
    DetectorKind kind() const override { return DetectorKind::random_forest; }
    std::size_t n_features() const override { return n_features_; }
    double raw_score(std::span<const std::uint8_t> row) const override;
    // Probability is the malicious-vote fraction itself; raw = fraction - 0.5.
    double probability_from_raw(double raw) const override { return raw + 0.5; }
    nlohmann::json to_json() const override;

    std::vector<Tree>& trees() { return trees_; }
    const std::vector<Tree>& trees() const { return trees_; }

    std::size_t n_features_ = 0;
    std::vector<Tree> trees_;  // leaf value is the tree's vote (0 or 1)
};

class MlpModel : public Detector {
  public:
    DetectorKind kind() const override { return DetectorKind::mlp; }
    std::size_t n_features() const override { return layer_sizes_.empty() ? 0 : layer_sizes_[0]; }
    double raw_score(std::span<const std::uint8_t> row) const override;
    nlohmann::json to_json() const override;

    // Flat parameter access for gradient checking.
    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> params);
    // Mean cross-entropy over the batch and its gradient w.r.t. flat params.
    double loss_and_grad(std::span<const BoolRow> rows, std::span<const int> labels,
                         std::vector<double>* grad) const;

    std::vector<std::size_t> layer_sizes_;          // input, hidden..., 1
    std::vector<std::vector<double>> weights_;      // [layer][out*in]
    std::vector<std::vector<double>> biases_;       // [layer][out]
};

}  // namespace evlab

#endif
