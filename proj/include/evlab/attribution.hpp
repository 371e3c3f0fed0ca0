#ifndef EVLAB_ATTRIBUTION_HPP
#define EVLAB_ATTRIBUTION_HPP

#include <span>
#include <string>
#include <vector>

#include "evlab/common.hpp"
#include "evlab/dataset.hpp"
#include "evlab/detectors.hpp"

namespace evlab {

enum class AttributionMethod { exact, permutation, kernel, linear };

std::string method_name(AttributionMethod m);
AttributionMethod method_from_name(const std::string& name);

// Background rows used to impute "absent" features (interventional
// replacement by background-sample values).
struct Background {
    std::vector<BoolRow> rows;

    std::string digest() const;
    // Samples up to n training rows without replacement, deterministic per seed.
    static Background sample_train(const LabeledDataset& data, std::size_t n, std::uint64_t seed);
};

struct Attribution {
    std::vector<double> phi;          // per-feature Shapley values on the raw score
    double phi0 = 0.0;                // mean raw score over the background
    AttributionMethod method = AttributionMethod::exact;
    int n_draws = 0;                  // 0 for exact/linear
    std::vector<double> std_error;    // per-feature (permutation method only)
};

// Exact Shapley values by coalition enumeration; requires d <= 15.
inline constexpr std::size_t kExactShapMaxFeatures = 15;
Attribution shap_exact(const Detector& model, std::span<const std::uint8_t> x,
                       const Background& bg);

// Unbiased permutation estimator of the same value function; deterministic
// per seed, with per-feature standard errors over permutations.
Attribution shap_permutation(const Detector& model, std::span<const std::uint8_t> x,
                             const Background& bg, int n_permutations, std::uint64_t seed);

struct KernelShapConfig {
    int n_coalitions = 0;       // must be >= d+2; >= 2^d-2 enumerates everything
    double regularization = 0;  // ridge penalty on the surrogate coefficients
    std::uint64_t seed = 0;
};

// Weighted least squares with the Shapley kernel, constrained so the full
// coalition reproduces f(x) and the empty coalition reproduces phi0.
Attribution shap_kernel(const Detector& model, std::span<const std::uint8_t> x,
                        const Background& bg, const KernelShapConfig& config);

// Closed form for linear models: phi_j = w_j * (x_j - mean_bg_j).
Attribution shap_linear(const LinearWeights& weights, std::span<const std::uint8_t> x,
                        const Background& bg);

struct ShapMatrix {
    std::vector<std::vector<double>> values;  // n x d, row order = split row order
    double phi0 = 0.0;
    std::string background_digest;
    std::string model_digest;

    std::size_t n_rows() const { return values.size(); }
    std::size_t n_features() const { return values.empty() ? 0 : values[0].size(); }
};

struct ShapConfig {
    AttributionMethod method = AttributionMethod::permutation;
    int n_permutations = 10;            // permutation method
    int n_coalitions = 0;               // kernel method; 0 = 4*d + 16
    double regularization = 0.0;
    std::size_t background_size = 100;
    // Cap on split rows used when a consumer builds a matrix over a split
    // (0 = all rows). Subsampling is seeded and keeps ascending row order.
    std::size_t row_limit = 0;
    std::uint64_t seed = 0;
};

// Seeded without-replacement subsample, returned in ascending order so row
// alignment and lowest-index tie rules stay meaningful.
std::vector<std::size_t> sample_row_subset(std::vector<std::size_t> indices, std::size_t limit,
                                           std::uint64_t seed);

// Per-row attributions over a dataset split. Rows are independent and carry
// per-row derived seeds, so parallel and serial runs are bit-identical.
ShapMatrix shap_matrix(const Detector& model, const LabeledDataset& data, Split split,
                       const ShapConfig& config);
ShapMatrix shap_matrix_rows(const Detector& model, std::span<const BoolRow> rows,
                            const Background& bg, const ShapConfig& config);

// CSV of values plus a JSON sidecar (phi0, method, seeds, digests) at
// path + ".meta.json".
void save_shap_matrix(const ShapMatrix& m, const ShapConfig& config, const std::string& path);
ShapMatrix load_shap_matrix(const std::string& path);

}  // namespace evlab

#endif
