#include "evlab/manipulation.hpp"

#include <unordered_set>

namespace evlab {

PatchedRow apply_patch(std::span<const std::uint8_t> row, const FeaturePatch& patch,
                       PatchMode mode) {
    PatchedRow out;
    out.row.assign(row.begin(), row.end());
    for (const PatchPair& p : patch.pairs) {
        if (p.feature < 0 || static_cast<std::size_t>(p.feature) >= out.row.size()) {
            throw error("apply_patch: unknown feature id " + std::to_string(p.feature));
        }
        const std::size_t f = static_cast<std::size_t>(p.feature);
        if (mode == PatchMode::problem_space && p.value == 0 && out.row[f] == 1) {
            out.skipped.push_back(SkippedPair{p.feature, "removal not realizable"});
            continue;
        }
        out.row[f] = p.value;
    }
    return out;
}

AdversarialPair build_adversarial(const ProblemSample& sample, const FeaturePatch& patch,
                                  const std::vector<FeatureSpec>& specs) {
    AdversarialPair pair;
    pair.original = sample;
    pair.adversarial = sample;

    std::unordered_set<std::string> present;
    for (const std::string& t : sample.live_tokens) present.insert(t);
    for (const std::string& t : sample.dead_tokens) present.insert(t);

    for (const PatchPair& p : patch.pairs) {
        if (p.feature < 0 || static_cast<std::size_t>(p.feature) >= specs.size()) {
            throw error("build: unknown feature id " + std::to_string(p.feature));
        }
        const std::string& token = specs[static_cast<std::size_t>(p.feature)].name;
        const bool has = present.count(token) > 0;
        if (p.value == 1) {
            if (has) continue;  // feature already present, nothing to add
            pair.adversarial.dead_tokens.push_back(token);
            present.insert(token);
            pair.feature_delta.push_back(FeatureDelta{p.feature, 0, 1});
        } else {
            if (has) {
                // mirror of apply_patch's problem-space rule
                pair.skipped_pairs.push_back(SkippedPair{p.feature, "removal not realizable"});
            }
            // absent already: no-op success
        }
    }
    return pair;
}

bool verify_functionality(const AdversarialPair& pair) {
    if (pair.adversarial.live_tokens != pair.original.live_tokens) return false;
    if (pair.adversarial.dead_tokens.size() < pair.original.dead_tokens.size()) return false;
    for (std::size_t i = 0; i < pair.original.dead_tokens.size(); ++i) {
        if (pair.adversarial.dead_tokens[i] != pair.original.dead_tokens[i]) return false;
    }
    return true;
}

}  // namespace evlab
