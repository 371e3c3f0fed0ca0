#ifndef EVLAB_SELECTION_HPP
#define EVLAB_SELECTION_HPP

#include <span>
#include <string>
#include <vector>

#include "evlab/attribution.hpp"
#include "evlab/common.hpp"
#include "evlab/dataset.hpp"
#include "evlab/detectors.hpp"

namespace evlab {

// Per-feature statistics over the active rows of a SHAP matrix:
// range = max - min of the column, above_mean_count = #values strictly above
// the column mean, amm = range * count elementwise.
struct AmmVectors {
    std::vector<double> range;          // D
    std::vector<int> above_mean_count;  // C
    std::vector<double> amm;            // D * C
};

AmmVectors amm_vectors(const ShapMatrix& shap, std::span<const std::size_t> active_rows);
AmmVectors amm_vectors_full(const ShapMatrix& shap);

enum class PatchMode { feature_space_only, problem_space };

std::string patch_mode_name(PatchMode m);
PatchMode patch_mode_from_name(const std::string& name);

struct PatchPair {
    int feature = 0;
    std::uint8_t value = 0;
};

struct IterationLog {
    int feature = -1;
    std::uint8_t value = 0;
    std::size_t rows_remaining = 0;  // after this iteration's filtering
    bool manipulable = false;
    bool appended = false;
};

struct FeaturePatch {
    std::vector<PatchPair> pairs;
    std::string source_model_digest;
    std::string config_digest;  // hash of the experiment config that produced it
    int n_requested = 0;
    std::vector<IterationLog> iterations;
    // Set when the loop ran out of rows or features before reaching N.
    bool truncated = false;

    // Patch restricted to its first n pairs (the loop is greedy, so this is
    // exactly the patch that requesting n would have produced).
    FeaturePatch prefix(std::size_t n) const;
};

// One greedy AMM iteration sequence over a SHAP matrix and the matching
// feature rows (same order). Ties in argmax/argmin break to the lowest index.
FeaturePatch amm_select_core(const ShapMatrix& shap, std::span<const BoolRow> rows,
                             const std::vector<FeatureSpec>& specs, int n_pairs, PatchMode mode);

// Full Algorithm-1 front end: computes the SHAP matrix of the split, then
// runs the greedy loop.
FeaturePatch amm_select(const Detector& model, const LabeledDataset& data, Split split,
                        int n_pairs, const ShapConfig& shap_config, PatchMode mode);

struct StatsSelection {
    std::vector<int> benign_features;     // B: set to 1 during manipulation
    std::vector<int> malicious_features;  // M: set to 0 during manipulation
    double m_top = 0.0, m_bottom = 0.0, b_top = 0.0, b_bottom = 0.0;
};

// Statistics-based baseline: per-class column sums, thresholds at the 10%/90%
// positions of each class's sorted positive-sum list, then a single pass in
// feature-id order.
StatsSelection stats_select(const LabeledDataset& data, Split split, int n_per_side);

// (b,1) pairs then (m,0) pairs, filtered by the same manipulability/value
// reachability rule as the AMM loop.
FeaturePatch stats_patch(const StatsSelection& selection, const std::vector<FeatureSpec>& specs,
                         PatchMode mode);

void save_patch(const FeaturePatch& patch, const std::string& path);
FeaturePatch load_patch(const std::string& path);

}  // namespace evlab

#endif
