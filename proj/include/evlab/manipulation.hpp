#ifndef EVLAB_MANIPULATION_HPP
#define EVLAB_MANIPULATION_HPP

#include <span>
#include <string>
#include <vector>

#include "evlab/dataset.hpp"
#include "evlab/selection.hpp"

namespace evlab {

struct SkippedPair {
    int feature = 0;
    std::string reason;
};

struct PatchedRow {
    BoolRow row;
    std::vector<SkippedPair> skipped;
};

// Applies pairs in patch order. In problem_space mode a (f,0) pair on a
// present feature is skipped ("removal not realizable": the builder can only
// add dead tokens); a (f,0) pair on an absent feature is a no-op success.
PatchedRow apply_patch(std::span<const std::uint8_t> row, const FeaturePatch& patch,
                       PatchMode mode);

struct FeatureDelta {
    int feature = 0;
    std::uint8_t old_value = 0;
    std::uint8_t new_value = 0;
};

struct AdversarialPair {
    ProblemSample original;
    ProblemSample adversarial;
    std::vector<FeatureDelta> feature_delta;
    std::vector<SkippedPair> skipped_pairs;
};

// Inverts the patch into the problem space: applied (f,1) pairs append the
// feature token to the dead section (unless the token is already present
// anywhere); the live section is never touched. Postcondition:
// vectorize(adversarial) == apply_patch(vectorize(original), patch,
// problem_space).
AdversarialPair build_adversarial(const ProblemSample& sample, const FeaturePatch& patch,
                                  const std::vector<FeatureSpec>& specs);

// True iff the live sections are byte-identical and the original dead section
// is a prefix of the adversarial one (dead code only grows).
bool verify_functionality(const AdversarialPair& pair);

}  // namespace evlab

#endif
