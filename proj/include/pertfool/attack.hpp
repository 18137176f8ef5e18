#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pertfool/nn.hpp"

namespace pertfool {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class NormMode { linf, l2, unbounded };

struct NormBound {
    NormMode mode = NormMode::linf;
    double eta = 15.0;  // ignored when unbounded
};

const char* norm_mode_name(NormMode m);
NormMode norm_mode_from_name(const std::string& name);

/// Perturbation vector plus the ball it lives in. Samples are perturbed by
/// subtraction: s' = clamp(s - p, 0, 255).
struct Perturbation {
    Tensor p;
    NormBound bound;
};

/// First / raw second exponential-moving-average moments of the expected
/// gradient, plus the step counter for bias correction.
struct MomentState {
    Tensor upsilon;
    Tensor omega;
    long long t = 0;
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;

    explicit MomentState(const std::vector<std::size_t>& shape)
        : upsilon(shape), omega(shape) {}
};

struct FoolConfig {
    int target_label = 0;
    int source_label = 0;
    NormBound bound;
    std::size_t batch_size = 128;  // must be even (b/2 source + b/2 non-source)
    double gamma = 0.8;            // stop once fooling ratio >= gamma
    long long max_iters = 5000;
    long long min_iters = 0;
    long long eval_every = 10;
    std::uint64_t rng_seed = 0;
    double nonsource_conf_floor = 0.6;
    unsigned threads = 1;

    void validate() const;
};

/// One fooling-ratio evaluation during an attack.
struct TraceRow {
    long long t = 0;
    double ratio = 0.0;
    double best_ratio = 0.0;
    double linf = 0.0;
    double l2 = 0.0;
    std::vector<long long> histogram;  // top-1 label counts over the eval set
};

struct TraceEvent {
    long long t = 0;
    std::string event;  // "stall", "refine", "degenerate-threshold", ...
};

struct AttackTrace {
    std::vector<TraceRow> rows;
    std::vector<TraceEvent> events;
    bool target_reached = false;
    long long final_iter = 0;
    double final_ratio = 0.0;
};

// ---------------------------------------------------------------------------
// Operations (Algorithm "attack to fool", line by line)
// ---------------------------------------------------------------------------

/// Keeps the correctly classified samples whose confidence is at least
/// `conf_floor`. The input must already exclude the source class.
LabeledDataset filter_nonsource(const Classifier& net, const LabeledDataset& data,
                                double conf_floor = 0.6, unsigned threads = 1);

/// s' = clamp(s - p, 0, 255) for one sample.
Tensor perturb_and_clip(const Tensor& sample, const Tensor& p);

/// Batch version of the above.
std::vector<Tensor> perturb_and_clip(const std::vector<Tensor>& batch, const Tensor& p);

/// Ratio of expected source/non-source gradient norms, floor-guarded and
/// clamped to [1e-6, 1e6].
double delta_scale(const std::vector<Tensor>& source_grads,
                   const std::vector<Tensor>& nonsource_grads);

/// xi = 1/2 (E[source grads] + delta * E[non-source grads]); the gradients
/// are taken at already perturbed-and-clipped samples, source toward the
/// target label, non-source toward each sample's own label.
Tensor expected_fooling_gradient(const Classifier& net, const std::vector<Tensor>& source_batch,
                                 const std::vector<Tensor>& nonsource_batch,
                                 const std::vector<int>& nonsource_labels, int target_label,
                                 unsigned threads = 1);

/// Exponential-moving-average update of both moments; increments t.
void moment_update(MomentState& state, const Tensor& xi);

/// Bias-corrected moment ratio: sqrt(1-beta2^t)/(1-beta1^t) * upsilon /
/// sqrt(omega + 1e-12).
Tensor bias_corrected_step(const MomentState& state);

/// p_prev + p_step / ||p_step||_inf. Returns false (and leaves p unchanged)
/// on a zero step.
bool step_and_normalize(Tensor& p, const Tensor& p_step);

/// Ball projection: linf clamp / l2 rescale / identity. Idempotent.
Tensor project(const Tensor& p, const NormBound& bound);

/// Fraction of source samples predicted as target_label after perturbation.
double fooling_ratio(const Classifier& net, const Tensor& p,
                     const std::vector<Tensor>& source_samples, int target_label,
                     unsigned threads = 1);

/// Same evaluation but also returning the top-1 histogram over all classes.
std::pair<double, std::vector<long long>> fooling_histogram(
    const Classifier& net, const Tensor& p, const std::vector<Tensor>& source_samples,
    int target_label, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Attack drivers
// ---------------------------------------------------------------------------

struct AttackResult {
    Perturbation perturbation;
    AttackTrace trace;
};

/// Full attack loop. S must hold source-class samples only; nonsource must
/// already be filtered by filter_nonsource. Stops when the fooling ratio on
/// all of S reaches config.gamma (and t >= min_iters), or at max_iters with
/// the best-so-far perturbation and trace.target_reached == false.
///
/// step1_mode replaces the non-source set with S and points every gradient
/// at the target label (the warm-start step of the two-step strategy).
AttackResult run_fool_attack(const Classifier& net, const std::vector<Tensor>& source_samples,
                             const LabeledDataset& nonsource, const FoolConfig& config,
                             bool step1_mode = false,
                             const Perturbation* warm_start = nullptr);

/// Two-step strategy: 100 iterations of the source-only warm start (b = 64),
/// then the full attack from that perturbation with fresh moments (b = 128,
/// gamma = 0.8, at least 100 iterations). The returned trace is the step-2
/// trace; step-1 rows are prepended with negative iteration indices removed.
struct TwoStepConfig {
    FoolConfig base;                // target/source/bound/seed/limits
    long long step1_iters = 100;
    std::size_t step1_batch = 64;
    std::size_t step2_batch = 128;
    double step2_gamma = 0.8;
    long long step2_min_iters = 100;
};

struct TwoStepResult {
    Perturbation perturbation;
    AttackTrace step1_trace;
    AttackTrace step2_trace;
};

TwoStepResult two_step_attack(const Classifier& net, const std::vector<Tensor>& source_samples,
                              const LabeledDataset& nonsource, const TwoStepConfig& config);

/// Convenience: extract images of one class from a dataset.
std::vector<Tensor> images_of_class(const LabeledDataset& data, int label);

}  // namespace pertfool
