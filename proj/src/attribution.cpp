#include "evlab/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace evlab {

using nlohmann::json;

std::string method_name(AttributionMethod m) {
    switch (m) {
        case AttributionMethod::exact: return "exact";
        case AttributionMethod::permutation: return "permutation";
        case AttributionMethod::kernel: return "kernel";
        case AttributionMethod::linear: return "linear";
    }
    return "exact";
}

AttributionMethod method_from_name(const std::string& name) {
    if (name == "exact") return AttributionMethod::exact;
    if (name == "permutation") return AttributionMethod::permutation;
    if (name == "kernel") return AttributionMethod::kernel;
    if (name == "linear") return AttributionMethod::linear;
    throw config_error("unknown attribution method '" + name + "'");
}

std::string Background::digest() const {
    Fnv1a h;
    h.update_u64(rows.size());
    for (const BoolRow& row : rows) {
        h.update(std::string_view(reinterpret_cast<const char*>(row.data()), row.size()));
    }
    return h.hex();
}

Background Background::sample_train(const LabeledDataset& data, std::size_t n,
                                    std::uint64_t seed) {
    std::vector<std::size_t> train = data.indices_of(Split::train);
    if (train.empty()) throw error("background sampling: empty train split");
    Rng rng(derive_seed(seed, seed_stream::background));
    rng.shuffle(train);
    Background bg;
    for (std::size_t k = 0; k < std::min(n, train.size()); ++k) {
        bg.rows.push_back(data.matrix.rows[train[k]]);
    }
    return bg;
}

namespace {

double background_mean_score(const Detector& model, const Background& bg) {
    double s = 0.0;
    for (const BoolRow& row : bg.rows) s += model.raw_score(row);
    return s / static_cast<double>(bg.rows.size());
}

// v(S) = mean over background of the score with features outside S replaced
// by background values.
double coalition_value(const Detector& model, std::span<const std::uint8_t> x,
                       const Background& bg, std::uint32_t mask) {
    const std::size_t d = x.size();
    double s = 0.0;
    BoolRow z(d);
    for (const BoolRow& b : bg.rows) {
        for (std::size_t j = 0; j < d; ++j) {
            z[j] = (mask >> j) & 1u ? x[j] : b[j];
        }
        s += model.raw_score(z);
    }
    return s / static_cast<double>(bg.rows.size());
}

}  // namespace

Attribution shap_exact(const Detector& model, std::span<const std::uint8_t> x,
                       const Background& bg) {
    const std::size_t d = x.size();
    if (d > kExactShapMaxFeatures) {
        throw error("shap_exact: d=" + std::to_string(d) + " exceeds the enumeration bound " +
                    std::to_string(kExactShapMaxFeatures) +
                    "; use the permutation or kernel estimator");
    }
    if (bg.rows.empty()) throw error("shap_exact: empty background");

    const std::uint32_t n_masks = 1u << d;
    std::vector<double> v(n_masks);
    for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
        v[mask] = coalition_value(model, x, bg, mask);
    }

    // weight(s) = s! (d-s-1)! / d!
    std::vector<double> weight(d);
    {
        std::vector<double> fact(d + 1, 1.0);
        for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
        for (std::size_t s = 0; s < d; ++s) weight[s] = fact[s] * fact[d - s - 1] / fact[d];
    }

    Attribution attr;
    attr.method = AttributionMethod::exact;
    attr.phi.assign(d, 0.0);
    attr.phi0 = v[0];
    for (std::size_t j = 0; j < d; ++j) {
        const std::uint32_t bit = 1u << j;
        for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            attr.phi[j] += weight[std::popcount(mask)] * (v[mask | bit] - v[mask]);
        }
    }
    return attr;
}

Attribution shap_permutation(const Detector& model, std::span<const std::uint8_t> x,
                             const Background& bg, int n_permutations, std::uint64_t seed) {
    const std::size_t d = x.size();
    if (bg.rows.empty()) throw error("shap_permutation: empty background");
    if (n_permutations < 1) throw error("shap_permutation: n_permutations must be >= 1");

    std::vector<double> mean(d, 0.0), m2(d, 0.0), contrib(d);
    BoolRow z(d);
    for (int t = 0; t < n_permutations; ++t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        const BoolRow& b = bg.rows[rng.uniform_index(bg.rows.size())];
        std::vector<std::size_t> order = rng.permutation(d);
        z.assign(b.begin(), b.end());
        double prev = model.raw_score(z);
        for (std::size_t j : order) {
            z[j] = x[j];
            double cur = model.raw_score(z);
            contrib[j] = cur - prev;
            prev = cur;
        }
        // Welford accumulation per feature
        for (std::size_t j = 0; j < d; ++j) {
            double delta = contrib[j] - mean[j];
            mean[j] += delta / static_cast<double>(t + 1);
            m2[j] += delta * (contrib[j] - mean[j]);
        }
    }

    Attribution attr;
    attr.method = AttributionMethod::permutation;
    attr.n_draws = n_permutations;
    attr.phi = mean;
    attr.phi0 = background_mean_score(model, bg);
    attr.std_error.assign(d, 0.0);
    if (n_permutations > 1) {
        for (std::size_t j = 0; j < d; ++j) {
            double var = m2[j] / static_cast<double>(n_permutations - 1);
            attr.std_error[j] = std::sqrt(var / static_cast<double>(n_permutations));
        }
    }
    return attr;
}

namespace {

// Solves the SPD system A x = b in place via LDL^T. Throws on a pivot that is
// effectively zero (rank-deficient normal equations).
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        double pivot = a[k * n + k];
        if (!(std::abs(pivot) > 1e-12)) {
            throw error("kernel SHAP: singular normal equations; increase n_coalitions");
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            double factor = a[i * n + k] / pivot;
            if (factor == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) a[i * n + j] -= factor * a[k * n + j];
            b[i] -= factor * b[k];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
        x[i] = s / a[i * n + i];
    }
    return x;
}

double shapley_kernel_weight(std::size_t d, std::size_t size) {
    // (d-1) / (C(d,s) * s * (d-s))
    double log_comb = std::lgamma(static_cast<double>(d) + 1.0) -
                      std::lgamma(static_cast<double>(size) + 1.0) -
                      std::lgamma(static_cast<double>(d - size) + 1.0);
    return static_cast<double>(d - 1) /
           (std::exp(log_comb) * static_cast<double>(size) * static_cast<double>(d - size));
}

}  // namespace

Attribution shap_kernel(const Detector& model, std::span<const std::uint8_t> x,
                        const Background& bg, const KernelShapConfig& config) {
    const std::size_t d = x.size();
    if (bg.rows.empty()) throw error("shap_kernel: empty background");
    if (config.n_coalitions < static_cast<int>(d) + 2) {
        throw error("shap_kernel: n_coalitions must be >= d+2 = " + std::to_string(d + 2));
    }
    if (config.regularization < 0.0) throw error("shap_kernel: regularization must be >= 0");
    if (d < 2) throw error("shap_kernel: needs at least 2 features");

    // coalition mask -> accumulated weight
    std::map<std::uint64_t, double> coalitions;
    const bool exhaustive =
        d <= 20 && static_cast<std::uint64_t>(config.n_coalitions) >= (1ULL << d) - 2;
    if (exhaustive) {
        for (std::uint64_t mask = 1; mask < (1ULL << d) - 1; ++mask) {
            coalitions[mask] = shapley_kernel_weight(d, static_cast<std::size_t>(
                                                            std::popcount(mask)));
        }
    } else {
        // Sample sizes proportional to the kernel mass per size, then a
        // uniform subset of that size; duplicates accumulate weight.
        std::vector<double> size_mass(d);  // index s = 1..d-1
        double total = 0.0;
        for (std::size_t s = 1; s < d; ++s) {
            size_mass[s] = static_cast<double>(d - 1) /
                           (static_cast<double>(s) * static_cast<double>(d - s));
            total += size_mass[s];
        }
        Rng rng(config.seed);
        std::vector<std::size_t> pool(d);
        for (int k = 0; k < config.n_coalitions; ++k) {
            double u = rng.uniform() * total;
            std::size_t size = 1;
            for (std::size_t s = 1; s < d; ++s) {
                if (u < size_mass[s] || s == d - 1) {
                    size = s;
                    break;
                }
                u -= size_mass[s];
            }
            std::iota(pool.begin(), pool.end(), std::size_t{0});
            std::uint64_t mask = 0;
            for (std::size_t i = 0; i < size; ++i) {
                std::size_t j = i + rng.uniform_index(d - i);
                std::swap(pool[i], pool[j]);
                mask |= 1ULL << pool[i];
            }
            coalitions[mask] += 1.0;
        }
    }

    const double phi0 = background_mean_score(model, bg);
    const double fx = model.raw_score(x);
    const double excess = fx - phi0;

    // Eliminate phi_{d-1} with the efficiency constraint, then solve the
    // (d-1)x(d-1) weighted normal equations.
    const std::size_t m = d - 1;
    std::vector<double> a(m * m, 0.0), rhs(m, 0.0);
    std::vector<double> feat(m);
    for (const auto& [mask, w] : coalitions) {
        const double v = coalition_value(model, x, bg, static_cast<std::uint32_t>(mask));
        const double z_last = (mask >> (d - 1)) & 1u ? 1.0 : 0.0;
        const double target = v - phi0 - z_last * excess;
        for (std::size_t j = 0; j < m; ++j) {
            feat[j] = (((mask >> j) & 1u) ? 1.0 : 0.0) - z_last;
        }
        for (std::size_t i = 0; i < m; ++i) {
            if (feat[i] == 0.0) continue;
            rhs[i] += w * feat[i] * target;
            for (std::size_t j = i; j < m; ++j) a[i * m + j] += w * feat[i] * feat[j];
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        a[i * m + i] += config.regularization;
        for (std::size_t j = 0; j < i; ++j) a[i * m + j] = a[j * m + i];
    }

    std::vector<double> phi_head = solve_spd(std::move(a), std::move(rhs), m);

    Attribution attr;
    attr.method = AttributionMethod::kernel;
    attr.n_draws = static_cast<int>(coalitions.size());
    attr.phi0 = phi0;
    attr.phi.assign(d, 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        attr.phi[j] = phi_head[j];
        sum += phi_head[j];
    }
    attr.phi[d - 1] = excess - sum;
    return attr;
}

Attribution shap_linear(const LinearWeights& weights, std::span<const std::uint8_t> x,
                        const Background& bg) {
    const std::size_t d = weights.weights.size();
    if (bg.rows.empty()) throw error("shap_linear: empty background");

    std::vector<double> mu(d, 0.0);
    for (const BoolRow& b : bg.rows) {
        for (std::size_t j = 0; j < d; ++j) mu[j] += b[j];
    }
    for (double& v : mu) v /= static_cast<double>(bg.rows.size());

    Attribution attr;
    attr.method = AttributionMethod::linear;
    attr.phi.assign(d, 0.0);
    attr.phi0 = weights.bias;
    for (std::size_t j = 0; j < d; ++j) {
        attr.phi[j] = weights.weights[j] * (static_cast<double>(x[j]) - mu[j]);
        attr.phi0 += weights.weights[j] * mu[j];
    }
    return attr;
}

ShapMatrix shap_matrix_rows(const Detector& model, std::span<const BoolRow> rows,
                            const Background& bg, const ShapConfig& config) {
    const std::size_t d = model.n_features();
    if (config.method == AttributionMethod::exact && d > kExactShapMaxFeatures) {
        throw error("shap_matrix: exact method requires d <= " +
                    std::to_string(kExactShapMaxFeatures) + ", got d=" + std::to_string(d));
    }
    if (config.method == AttributionMethod::linear && model.kind() != DetectorKind::linear_svm) {
        throw error("shap_matrix: linear method requires a linear_svm model");
    }

    ShapMatrix m;
    m.values.resize(rows.size());
    m.background_digest = bg.digest();
    m.model_digest = model.digest();

    LinearWeights lw;
    if (config.method == AttributionMethod::linear) lw = linear_weights(model);

    // phi0 depends only on model and background, never on the row.
    if (config.method == AttributionMethod::linear) {
        std::vector<double> mu(d, 0.0);
        for (const BoolRow& b : bg.rows) {
            for (std::size_t j = 0; j < d; ++j) mu[j] += b[j];
        }
        m.phi0 = lw.bias;
        for (std::size_t j = 0; j < d; ++j) {
            m.phi0 += lw.weights[j] * mu[j] / static_cast<double>(bg.rows.size());
        }
    } else {
        double s = 0.0;
        for (const BoolRow& b : bg.rows) s += model.raw_score(b);
        m.phi0 = s / static_cast<double>(bg.rows.size());
    }

    std::vector<std::string> row_errors(rows.size());
    parallel_for(rows.size(), env_threads(), [&](std::size_t i) {
        try {
            Attribution attr;
            const std::uint64_t row_seed = derive_seed(config.seed, 10000 + i);
            switch (config.method) {
                case AttributionMethod::exact:
                    attr = shap_exact(model, rows[i], bg);
                    break;
                case AttributionMethod::permutation:
                    attr = shap_permutation(model, rows[i], bg, config.n_permutations, row_seed);
                    break;
                case AttributionMethod::kernel: {
                    KernelShapConfig kc;
                    kc.n_coalitions = config.n_coalitions > 0 ? config.n_coalitions
                                                              : static_cast<int>(4 * d + 16);
                    kc.regularization = config.regularization;
                    kc.seed = row_seed;
                    attr = shap_kernel(model, rows[i], bg, kc);
                    break;
                }
                case AttributionMethod::linear:
                    attr = shap_linear(lw, rows[i], bg);
                    break;
            }
            m.values[i] = std::move(attr.phi);
        } catch (const std::exception& e) {
            row_errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < row_errors.size(); ++i) {
        if (!row_errors[i].empty()) {
            throw error("shap_matrix: row " + std::to_string(i) + ": " + row_errors[i]);
        }
    }
    return m;
}

std::vector<std::size_t> sample_row_subset(std::vector<std::size_t> indices, std::size_t limit,
                                           std::uint64_t seed) {
    if (limit == 0 || indices.size() <= limit) return indices;
    Rng rng(derive_seed(seed, 0x5b5e7));
    rng.shuffle(indices);
    indices.resize(limit);
    std::sort(indices.begin(), indices.end());
    return indices;
}

ShapMatrix shap_matrix(const Detector& model, const LabeledDataset& data, Split split,
                       const ShapConfig& config) {
    Background bg = Background::sample_train(data, config.background_size, config.seed);
    std::vector<BoolRow> rows;
    for (std::size_t i :
         sample_row_subset(data.indices_of(split), config.row_limit, config.seed)) {
        rows.push_back(data.matrix.rows[i]);
    }
    return shap_matrix_rows(model, rows, bg, config);
}

void save_shap_matrix(const ShapMatrix& m, const ShapConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot open '" + path + "' for writing");
    for (const auto& row : m.values) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << format_double(row[j]);
        }
        out << '\n';
    }
    json meta{{"phi0", format_double(m.phi0)},
              {"method", method_name(config.method)},
              {"n_permutations", config.n_permutations},
              {"n_coalitions", config.n_coalitions},
              {"seed", config.seed},
              {"background_digest", m.background_digest},
              {"model_digest", m.model_digest}};
    std::ofstream side(path + ".meta.json", std::ios::binary);
    if (!side) throw error("cannot open '" + path + ".meta.json' for writing");
    side << meta.dump(2) << '\n';
}

ShapMatrix load_shap_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open '" + path + "' for reading");
    ShapMatrix m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(parse_double(cell));
        m.values.push_back(std::move(row));
    }
    std::ifstream side(path + ".meta.json", std::ios::binary);
    if (!side) throw error("missing sidecar '" + path + ".meta.json'");
    json meta = json::parse(side);
    m.phi0 = parse_double(meta.at("phi0").get<std::string>());
    m.background_digest = meta.at("background_digest").get<std::string>();
    m.model_digest = meta.at("model_digest").get<std::string>();
    return m;
}

}  // namespace evlab
