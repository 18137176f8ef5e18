#include "pertfool/attack.hpp"

#include <algorithm>
#include <cmath>

#include "pertfool/parallel.hpp"

namespace pertfool {

const char* norm_mode_name(NormMode m) {
    switch (m) {
        case NormMode::linf: return "linf";
        case NormMode::l2: return "l2";
        default: return "unbounded";
    }
}

NormMode norm_mode_from_name(const std::string& name) {
    if (name == "linf") return NormMode::linf;
    if (name == "l2") return NormMode::l2;
    if (name == "unbounded") return NormMode::unbounded;
    throw ConfigError("unknown norm mode '" + name + "' (expected linf|l2|unbounded)");
}

void FoolConfig::validate() const {
    if (target_label == source_label)
        throw ConfigError("fool: target label must differ from source label");
    if (batch_size == 0 || batch_size % 2 != 0)
        throw ConfigError("fool: batch size must be a positive even number");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("fool: gamma must lie in [0, 1]");
    if (bound.mode != NormMode::unbounded && bound.eta <= 0.0)
        throw ConfigError("fool: eta must be positive for bounded modes");
    if (max_iters <= 0) throw ConfigError("fool: max_iters must be positive");
    if (min_iters < 0) throw ConfigError("fool: min_iters must be non-negative");
    if (eval_every <= 0) throw ConfigError("fool: eval_every must be positive");
}

LabeledDataset filter_nonsource(const Classifier& net, const LabeledDataset& data,
                                double conf_floor, unsigned threads) {
    std::vector<char> keep(data.samples.size(), 0);
    parallel_for(data.samples.size(), threads, [&](std::size_t i) {
        auto [label, conf] = predict_with_confidence(net, data.samples[i].image);
        keep[i] = label == data.samples[i].label && conf >= conf_floor;
    });
    LabeledDataset out;
    out.split = data.split;
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        if (keep[i]) out.samples.push_back(data.samples[i]);
    if (out.samples.empty()) throw ConfigError("non-source pool empty");
    return out;
}

Tensor perturb_and_clip(const Tensor& sample, const Tensor& p) {
    check_same_shape(sample, p, "perturb_and_clip");
    Tensor out = sample;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double v = out.data[i] - p.data[i];
        out.data[i] = v < Classifier::dynamic_range_lo   ? Classifier::dynamic_range_lo
                      : v > Classifier::dynamic_range_hi ? Classifier::dynamic_range_hi
                                                         : v;
    }
    return out;
}

std::vector<Tensor> perturb_and_clip(const std::vector<Tensor>& batch, const Tensor& p) {
    std::vector<Tensor> out;
    out.reserve(batch.size());
    for (const auto& s : batch) out.push_back(perturb_and_clip(s, p));
    return out;
}

double delta_scale(const std::vector<Tensor>& source_grads,
                   const std::vector<Tensor>& nonsource_grads) {
    if (source_grads.empty() || nonsource_grads.empty())
        throw InputError("delta_scale: empty gradient list");
    auto mean_norm = [](const std::vector<Tensor>& grads) {
        double s = 0.0;
        for (const auto& g : grads) s += g.l2_norm();
        return s / static_cast<double>(grads.size());
    };
    double num = mean_norm(source_grads);
    double den = std::max(mean_norm(nonsource_grads), 1e-12);
    return std::clamp(num / den, 1e-6, 1e6);
}

namespace {

// Per-sample gradients in index order; reduction happens in ascending order
// so the result is independent of the thread count.
std::vector<Tensor> batch_gradients(const Classifier& net, const std::vector<Tensor>& batch,
                                    const std::vector<int>& labels, unsigned threads) {
    std::vector<Tensor> grads(batch.size());
    parallel_for(batch.size(), threads,
                 [&](std::size_t i) { grads[i] = input_gradient(net, batch[i], labels[i]); });
    return grads;
}

Tensor mean_in_order(const std::vector<Tensor>& grads) {
    Tensor m(grads.front().shape);
    for (const auto& g : grads) m += g;
    m *= 1.0 / static_cast<double>(grads.size());
    return m;
}

}  // namespace

Tensor expected_fooling_gradient(const Classifier& net, const std::vector<Tensor>& source_batch,
                                 const std::vector<Tensor>& nonsource_batch,
                                 const std::vector<int>& nonsource_labels, int target_label,
                                 unsigned threads) {
    if (source_batch.empty() || nonsource_batch.empty())
        throw InputError("expected_fooling_gradient: empty batch");
    if (nonsource_batch.size() != nonsource_labels.size())
        throw InputError("expected_fooling_gradient: label count mismatch");

    std::vector<int> source_labels(source_batch.size(), target_label);
    auto source_grads = batch_gradients(net, source_batch, source_labels, threads);
    auto nonsource_grads = batch_gradients(net, nonsource_batch, nonsource_labels, threads);

    const double delta = delta_scale(source_grads, nonsource_grads);
    Tensor xi = mean_in_order(source_grads);
    Tensor other = mean_in_order(nonsource_grads);
    for (std::size_t i = 0; i < xi.data.size(); ++i)
        xi.data[i] = 0.5 * (xi.data[i] + delta * other.data[i]);
    return xi;
}

void moment_update(MomentState& state, const Tensor& xi) {
    check_same_shape(state.upsilon, xi, "moment_update");
    for (std::size_t i = 0; i < xi.data.size(); ++i) {
        state.upsilon.data[i] =
            MomentState::beta1 * state.upsilon.data[i] + (1.0 - MomentState::beta1) * xi.data[i];
        state.omega.data[i] = MomentState::beta2 * state.omega.data[i] +
                              (1.0 - MomentState::beta2) * xi.data[i] * xi.data[i];
    }
    ++state.t;
}

Tensor bias_corrected_step(const MomentState& state) {
    if (state.t < 1) throw InputError("bias_corrected_step: t must be >= 1");
    const double bc = std::sqrt(1.0 - std::pow(MomentState::beta2, state.t)) /
                      (1.0 - std::pow(MomentState::beta1, state.t));
    Tensor step(state.upsilon.shape);
    for (std::size_t i = 0; i < step.data.size(); ++i)
        step.data[i] = bc * state.upsilon.data[i] / std::sqrt(state.omega.data[i] + 1e-12);
    return step;
}

bool step_and_normalize(Tensor& p, const Tensor& p_step) {
    check_same_shape(p, p_step, "step_and_normalize");
    const double norm = p_step.linf_norm();
    if (norm == 0.0) return false;
    for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] += p_step.data[i] / norm;
    return true;
}

Tensor project(const Tensor& p, const NormBound& bound) {
    switch (bound.mode) {
        case NormMode::linf: {
            Tensor out = p;
            for (double& v : out.data)
                v = v > bound.eta ? bound.eta : (v < -bound.eta ? -bound.eta : v);
            return out;
        }
        case NormMode::l2: {
            // The tolerance makes reprojection a bit-exact no-op: a rescaled
            // vector lands within a few ulps of the sphere.
            const double n = p.l2_norm();
            if (n <= bound.eta * (1.0 + 1e-12)) return p;
            Tensor out = p;
            out *= bound.eta / n;
            return out;
        }
        default: return p;
    }
}

std::pair<double, std::vector<long long>> fooling_histogram(
    const Classifier& net, const Tensor& p, const std::vector<Tensor>& source_samples,
    int target_label, unsigned threads) {
    if (source_samples.empty()) throw InputError("fooling_ratio: empty sample set");
    std::vector<int> predicted(source_samples.size());
    parallel_for(source_samples.size(), threads, [&](std::size_t i) {
        predicted[i] =
            predict_with_confidence(net, perturb_and_clip(source_samples[i], p)).first;
    });
    std::vector<long long> hist(static_cast<std::size_t>(net.num_classes), 0);
    long long fooled = 0;
    for (int label : predicted) {
        ++hist[static_cast<std::size_t>(label)];
        if (label == target_label) ++fooled;
    }
    return {static_cast<double>(fooled) / static_cast<double>(source_samples.size()),
            std::move(hist)};
}

double fooling_ratio(const Classifier& net, const Tensor& p,
                     const std::vector<Tensor>& source_samples, int target_label,
                     unsigned threads) {
    return fooling_histogram(net, p, source_samples, target_label, threads).first;
}

std::vector<Tensor> images_of_class(const LabeledDataset& data, int label) {
    std::vector<Tensor> out;
    for (const auto& s : data.samples)
        if (s.label == label) out.push_back(s.image);
    return out;
}

AttackResult run_fool_attack(const Classifier& net, const std::vector<Tensor>& source_samples,
                             const LabeledDataset& nonsource, const FoolConfig& config,
                             bool step1_mode, const Perturbation* warm_start) {
    config.validate();
    if (source_samples.empty()) throw InputError("run_fool_attack: empty source set");
    if (!step1_mode && nonsource.samples.empty())
        throw InputError("run_fool_attack: empty non-source set");

    const auto shape = net.input_shape_vec();
    Tensor p = warm_start ? warm_start->p : Tensor(shape);
    if (warm_start && p.shape != shape)
        throw InputError("run_fool_attack: warm start shape mismatch");

    MomentState moments(shape);
    Rng rng(config.rng_seed);
    AttackTrace trace;

    double best_ratio = -1.0;
    Tensor best_p = p;

    const std::size_t half = config.batch_size / 2;
    long long t = 0;

    auto evaluate = [&](long long iter) {
        auto [ratio, hist] =
            fooling_histogram(net, p, source_samples, config.target_label, config.threads);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best_p = p;
        }
        trace.rows.push_back(
            {iter, ratio, best_ratio, p.linf_norm(), p.l2_norm(), std::move(hist)});
        return ratio;
    };

    double ratio = evaluate(0);
    while (t < config.max_iters && !(ratio >= config.gamma && t >= config.min_iters)) {
        // line 3: draw b/2 + b/2 uniformly with replacement
        std::vector<Tensor> src_batch;
        std::vector<Tensor> other_batch;
        std::vector<int> other_labels;
        src_batch.reserve(half);
        other_batch.reserve(half);
        other_labels.reserve(half);
        for (std::size_t i = 0; i < half; ++i)
            src_batch.push_back(source_samples[rng.next_index(source_samples.size())]);
        if (step1_mode) {
            for (std::size_t i = 0; i < half; ++i) {
                other_batch.push_back(source_samples[rng.next_index(source_samples.size())]);
                other_labels.push_back(config.target_label);
            }
        } else {
            for (std::size_t i = 0; i < half; ++i) {
                const Sample& s = nonsource.samples[rng.next_index(nonsource.samples.size())];
                other_batch.push_back(s.image);
                other_labels.push_back(s.label);
            }
        }

        // line 4: perturb and clip both halves
        auto src_pert = perturb_and_clip(src_batch, p);
        auto other_pert = perturb_and_clip(other_batch, p);

        // lines 5-10
        ++t;
        Tensor xi = expected_fooling_gradient(net, src_pert, other_pert, other_labels,
                                              config.target_label, config.threads);
        moment_update(moments, xi);
        Tensor step = bias_corrected_step(moments);

        // lines 11-12
        if (!step_and_normalize(p, step))
            trace.events.push_back({t, "stall"});
        p = project(p, config.bound);

        if (t % config.eval_every == 0 || t == config.max_iters) ratio = evaluate(t);
    }
    if (trace.rows.back().t != t) ratio = evaluate(t);

    trace.final_iter = t;
    trace.final_ratio = ratio;
    trace.target_reached = ratio >= config.gamma;

    Perturbation out;
    out.bound = config.bound;
    out.p = trace.target_reached ? p : best_p;
    return {std::move(out), std::move(trace)};
}

TwoStepResult two_step_attack(const Classifier& net, const std::vector<Tensor>& source_samples,
                              const LabeledDataset& nonsource, const TwoStepConfig& config) {
    // Step 1: non-source set replaced by the source set, every gradient taken
    // toward the target label; exactly step1_iters iterations.
    FoolConfig step1 = config.base;
    step1.batch_size = config.step1_batch;
    step1.gamma = 1.0;
    step1.min_iters = config.step1_iters;
    step1.max_iters = config.step1_iters;
    step1.rng_seed = config.base.rng_seed;
    auto first = run_fool_attack(net, source_samples, nonsource, step1, /*step1_mode=*/true);

    // Step 2: warm start from step 1's perturbation, fresh moment state.
    FoolConfig step2 = config.base;
    step2.batch_size = config.step2_batch;
    step2.gamma = config.step2_gamma;
    step2.min_iters = config.step2_min_iters;
    step2.rng_seed = config.base.rng_seed + 1;
    auto second = run_fool_attack(net, source_samples, nonsource, step2, /*step1_mode=*/false,
                                  &first.perturbation);

    return {std::move(second.perturbation), std::move(first.trace), std::move(second.trace)};
}

}  // namespace pertfool
