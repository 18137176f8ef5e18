#pragma once

#include <map>
#include <optional>
#include <vector>

#include "pertfool/attack.hpp"

namespace pertfool {

struct FoolingReport {
    double fooling_ratio = 0.0;
    double leakage = 0.0;
    std::map<int, double> per_class_target_rate;  // non-source classes only
    std::size_t n_source = 0;
    std::size_t n_nonsource = 0;
    double linf = 0.0;
    double l2 = 0.0;
};

struct HopEntry {
    long long t = 0;
    int max_label = 0;  // modal predicted label, source excluded
    long long frequency = 0;
};

using HopTrace = std::vector<HopEntry>;

struct DistanceCell {
    int source = 0;
    int target = 0;
    std::vector<double> norms;  // one l2 norm per converged repeat
    std::optional<double> mean;
    std::optional<double> stddev;  // population std; 0 when repeats == 1
    std::size_t attempted = 0;
};

using DistanceTable = std::vector<DistanceCell>;

/// Mean over non-source classes of the per-class rate at which perturbed
/// samples are predicted as the target label. The map goes class -> samples
/// of that class; it must not contain the source or target class.
double leakage(const Classifier& net, const Tensor& p,
               const std::map<int, std::vector<Tensor>>& nonsource_sets, int target_label,
               unsigned threads = 1);

/// Per-class target rates backing the leakage mean.
std::map<int, double> per_class_target_rates(
    const Classifier& net, const Tensor& p,
    const std::map<int, std::vector<Tensor>>& nonsource_sets, int target_label,
    unsigned threads = 1);

/// Modal non-source predicted label at every evaluation point of a trace.
/// When every sample still predicts the source class, the lowest non-source
/// index is reported with frequency 0.
HopTrace hop_trace(const AttackTrace& trace, int source_label);

struct DistanceTableConfig {
    std::vector<int> class_list;
    std::size_t repeats = 3;
    double fool_target = 0.95;
    std::size_t per_class = 0;  // 0: use all available (counts must match)
    std::size_t batch_size = 32;
    long long max_iters = 3000;
    long long eval_every = 10;
    std::uint64_t rng_seed = 0;
    double nonsource_conf_floor = 0.6;
    unsigned threads = 1;
};

/// Unbounded attacks for every ordered class pair, recording the l2 norm of
/// the perturbation that first reaches the fooling target on the training
/// samples. Non-converged repeats leave the cell partially (or fully) empty.
DistanceTable distance_table(const Classifier& net, const LabeledDataset& train_set,
                             const DistanceTableConfig& config);

/// max over pairs of |d(A->B) - d(B->A)|, using cells with a mean.
double distance_asymmetry(const DistanceTable& table);

/// Pooled standard deviation across all converged cells.
double pooled_std(const DistanceTable& table);

/// Full evaluation of a perturbation: fooling ratio on held-out source
/// samples, leakage over the remaining classes (target excluded), norms.
FoolingReport report(const Classifier& net, const Perturbation& pert,
                     const LabeledDataset& eval_set, int source_label, int target_label,
                     unsigned threads = 1);

}  // namespace pertfool
