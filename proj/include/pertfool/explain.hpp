#pragma once

#include <cstdint>
#include <vector>

#include "pertfool/attack.hpp"
#include "pertfool/nn.hpp"

namespace pertfool {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct ExplainConfig {
    int target_label = 0;
    Tensor seed;               // anchor image d
    double seed_weight = 0.5;  // alpha in (0, 1)
    double gamma = 0.8;
    NormBound bound{NormMode::linf, 10.0};
    std::size_t batch_size = 32;
    std::size_t pool_size = 255;
    long long refine_every = 50;
    long long refine_until = 300;
    long long max_iters = 5000;
    std::uint64_t rng_seed = 0;
    unsigned threads = 1;

    void validate(const Classifier& net) const;
};

/// Inpainting objective of the masked loss: the mask marks the corrupt
/// region (1 = corrupt) where the perturbation may grow freely; outside it
/// the perturbation is taxed quadratically with weight beta.
struct InpaintSpec {
    Tensor mask;        // binary {0,1}, same shape as the input
    double beta = 10.0;
    Tensor seed;        // the corrupted image

    void validate(const Classifier& net) const;
};

/// Multivariate Gaussian over 4x-downsampled images, used to synthesize
/// input pools for generation-style runs.
struct GaussianSampler {
    std::size_t down_h = 0, down_w = 0, channels = 0;
    std::size_t input_h = 0, input_w = 0;
    Tensor mean;  // (dim) with dim = down_h*down_w*channels
    Tensor cov;   // (dim, dim), symmetric PSD
    double jitter = 1e-6;
    Tensor chol;  // cached lower Cholesky factor of cov + jitter*I

    std::size_t dim() const { return down_h * down_w * channels; }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// xi = alpha * grad J(clip(seed - p), target)
///    + (1 - alpha) * E_batch[grad J(clip(s - p), target)].
Tensor explain_gradient(const Classifier& net, const Tensor& seed,
                        const std::vector<Tensor>& pool_batch, const Tensor& p,
                        int target_label, double alpha, unsigned threads = 1);

/// Mean log P(target | clip(s - q)) over the batch; used by the inversion
/// check below.
double direction_score(const Classifier& net, const Tensor& q,
                       const std::vector<Tensor>& eval_batch, int target_label,
                       unsigned threads = 1);

/// Returns -p if the inverted direction scores at least as well as p on the
/// evaluation batch, otherwise p unchanged.
Tensor direction_inversion_check(const Classifier& net, const Tensor& p_candidate,
                                 const std::vector<Tensor>& eval_batch, int target_label,
                                 unsigned threads = 1);

struct ExplainResult {
    Perturbation perturbation;  // returned unbounded: refinement scales past the ball
    AttackTrace trace;
};

/// Seed-anchored explanation attack: phase A optimizes until the fraction of
/// pool + seed predicted as the target reaches gamma, phase B refines once,
/// phase C runs refine_until more iterations with a refinement every
/// refine_every of them. The pool must not contain target-class samples.
ExplainResult run_explain(const Classifier& net, const std::vector<Tensor>& pool,
                          const ExplainConfig& config);

/// Composed masked loss: mean_s J(s - p, target) + beta * ||p o (1-F)||_2^2.
/// No clipping inside, matching the objective it differentiates.
double masked_objective_loss(const Classifier& net, const std::vector<Tensor>& samples,
                             const Tensor& p, const InpaintSpec& spec, int target_label);

/// Exact gradient of the composed masked loss w.r.t. p.
Tensor masked_objective_gradient(const Classifier& net, const std::vector<Tensor>& samples,
                                 const Tensor& p, const InpaintSpec& spec, int target_label,
                                 unsigned threads = 1);

// ---------------------------------------------------------------------------
// Gaussian input synthesis
// ---------------------------------------------------------------------------

/// Mean/covariance over down_factor-pooled images plus a ready Cholesky
/// factor. Image sides must be divisible by down_factor.
GaussianSampler build_gaussian_sampler(const std::vector<Tensor>& images,
                                       std::size_t down_factor = 4, double jitter = 1e-6);

/// Recomputes the Cholesky factor (after loading from disk). Throws
/// NumericError if factorization fails even with jitter.
void refresh_cholesky(GaussianSampler& sampler);

/// One latent draw in the downsampled space.
Tensor sample_latent(const GaussianSampler& sampler, Rng& rng);

/// Bicubic upsampling of a latent draw to the input resolution, clamped to
/// [0, 255].
Tensor latent_to_input(const GaussianSampler& sampler, const Tensor& latent);

struct GaussianInputs {
    Tensor seed;
    std::vector<Tensor> pool;
};

/// Builds the sampler from target-class images and draws `count` inputs; the
/// first draw is the seed, the rest form the pool.
GaussianInputs gaussian_inputs(const std::vector<Tensor>& target_class_images,
                               std::size_t count, Rng& rng, std::size_t down_factor = 4,
                               double jitter = 1e-6);

/// Selects pool images for run_explain from a labeled dataset, never touching
/// target-class samples. Returns the chosen dataset indices alongside the
/// images so callers (and tests) can audit the selection.
std::pair<std::vector<Tensor>, std::vector<std::size_t>> build_explain_pool(
    const LabeledDataset& data, int target_label, std::size_t pool_size, Rng& rng);

}  // namespace pertfool
