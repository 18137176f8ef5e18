#include "pertfool/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pertfool {

std::map<int, double> per_class_target_rates(
    const Classifier& net, const Tensor& p,
    const std::map<int, std::vector<Tensor>>& nonsource_sets, int target_label,
    unsigned threads) {
    if (nonsource_sets.empty()) throw InputError("leakage: empty class set");
    std::map<int, double> rates;
    for (const auto& [label, samples] : nonsource_sets) {
        if (samples.empty()) throw InputError("leakage: class without samples");
        rates[label] = fooling_ratio(net, p, samples, target_label, threads);
    }
    return rates;
}

double leakage(const Classifier& net, const Tensor& p,
               const std::map<int, std::vector<Tensor>>& nonsource_sets, int target_label,
               unsigned threads) {
    auto rates = per_class_target_rates(net, p, nonsource_sets, target_label, threads);
    double s = 0.0;
    for (const auto& [label, r] : rates) s += r;
    return s / static_cast<double>(rates.size());
}

HopTrace hop_trace(const AttackTrace& trace, int source_label) {
    HopTrace hops;
    hops.reserve(trace.rows.size());
    for (const auto& row : trace.rows) {
        int best = -1;
        long long best_count = -1;
        for (std::size_t label = 0; label < row.histogram.size(); ++label) {
            if (static_cast<int>(label) == source_label) continue;
            if (row.histogram[label] > best_count) {  // ties keep the lowest index
                best_count = row.histogram[label];
                best = static_cast<int>(label);
            }
        }
        hops.push_back({row.t, best, best_count});
    }
    return hops;
}

DistanceTable distance_table(const Classifier& net, const LabeledDataset& train_set,
                             const DistanceTableConfig& config) {
    if (config.class_list.size() < 2)
        throw InputError("distance_table: need at least two classes");
    if (config.repeats == 0) throw InputError("distance_table: repeats must be positive");

    // Equal per-class sample counts, as the methodology requires.
    std::map<int, std::vector<Tensor>> class_images;
    std::size_t min_count = std::numeric_limits<std::size_t>::max();
    for (int label : config.class_list) {
        class_images[label] = images_of_class(train_set, label);
        min_count = std::min(min_count, class_images[label].size());
    }
    std::size_t per_class = config.per_class == 0 ? min_count : config.per_class;
    if (per_class == 0 || per_class > min_count)
        throw InputError("distance_table: not enough samples per class");
    for (auto& [label, images] : class_images) images.resize(per_class);

    DistanceTable table;
    for (int source : config.class_list) {
        // The non-source pool for the attack: everything but the source class.
        LabeledDataset others;
        others.split = train_set.split;
        for (const auto& s : train_set.samples)
            if (s.label != source) others.samples.push_back(s);
        LabeledDataset filtered =
            filter_nonsource(net, others, config.nonsource_conf_floor, config.threads);

        for (int target : config.class_list) {
            if (target == source) continue;
            DistanceCell cell;
            cell.source = source;
            cell.target = target;
            cell.attempted = config.repeats;
            for (std::size_t r = 0; r < config.repeats; ++r) {
                FoolConfig fc;
                fc.target_label = target;
                fc.source_label = source;
                fc.bound = NormBound{NormMode::unbounded, 0.0};
                fc.batch_size = config.batch_size;
                fc.gamma = config.fool_target;
                fc.max_iters = config.max_iters;
                fc.eval_every = config.eval_every;
                fc.threads = config.threads;
                fc.rng_seed = Rng(config.rng_seed)
                                  .split(static_cast<std::uint64_t>(source) * 1000003ULL +
                                         static_cast<std::uint64_t>(target) * 1009ULL + r)
                                  .next_u64();
                auto result = run_fool_attack(net, class_images[source], filtered, fc);
                if (result.trace.target_reached)
                    cell.norms.push_back(result.perturbation.p.l2_norm());
            }
            if (!cell.norms.empty()) {
                double mean = 0.0;
                for (double v : cell.norms) mean += v;
                mean /= static_cast<double>(cell.norms.size());
                double var = 0.0;
                for (double v : cell.norms) var += (v - mean) * (v - mean);
                var /= static_cast<double>(cell.norms.size());
                cell.mean = mean;
                cell.stddev = std::sqrt(var);
            }
            table.push_back(std::move(cell));
        }
    }
    return table;
}

namespace {

const DistanceCell* find_cell(const DistanceTable& table, int source, int target) {
    for (const auto& c : table)
        if (c.source == source && c.target == target) return &c;
    return nullptr;
}

}  // namespace

double distance_asymmetry(const DistanceTable& table) {
    double worst = 0.0;
    for (const auto& c : table) {
        if (!c.mean) continue;
        const DistanceCell* back = find_cell(table, c.target, c.source);
        if (back && back->mean) worst = std::max(worst, std::abs(*c.mean - *back->mean));
    }
    return worst;
}

double pooled_std(const DistanceTable& table) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : table) {
        if (!c.stddev) continue;
        sum += *c.stddev * *c.stddev;
        ++n;
    }
    return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

FoolingReport report(const Classifier& net, const Perturbation& pert,
                     const LabeledDataset& eval_set, int source_label, int target_label,
                     unsigned threads) {
    auto source_images = images_of_class(eval_set, source_label);
    if (source_images.empty()) throw InputError("report: no source samples in eval set");

    std::map<int, std::vector<Tensor>> nonsource;
    for (const auto& s : eval_set.samples)
        if (s.label != source_label && s.label != target_label)
            nonsource[s.label].push_back(s.image);
    if (nonsource.empty()) throw InputError("report: no non-source classes in eval set");

    FoolingReport rep;
    rep.fooling_ratio = fooling_ratio(net, pert.p, source_images, target_label, threads);
    rep.per_class_target_rate =
        per_class_target_rates(net, pert.p, nonsource, target_label, threads);
    double s = 0.0;
    for (const auto& [label, r] : rep.per_class_target_rate) s += r;
    rep.leakage = s / static_cast<double>(rep.per_class_target_rate.size());
    rep.n_source = source_images.size();
    for (const auto& [label, images] : nonsource) rep.n_nonsource += images.size();
    rep.linf = pert.p.linf_norm();
    rep.l2 = pert.p.l2_norm();
    return rep;
}

}  // namespace pertfool
