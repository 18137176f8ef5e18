#include "pertfool/explain.hpp"

#include <algorithm>
#include <cmath>

#include "pertfool/parallel.hpp"
#include "pertfool/refine.hpp"

namespace pertfool {

void ExplainConfig::validate(const Classifier& net) const {
    if (target_label < 0 || target_label >= net.num_classes)
        throw ConfigError("explain: target label out of range");
    if (seed.shape != net.input_shape_vec())
        throw ConfigError("explain: seed does not match the classifier input shape");
    if (seed_weight < 0.0 || seed_weight > 1.0)
        throw ConfigError("explain: seed weight must lie in [0, 1]");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("explain: gamma must lie in [0, 1]");
    if (bound.mode != NormMode::unbounded && bound.eta <= 0.0)
        throw ConfigError("explain: eta must be positive");
    if (batch_size == 0) throw ConfigError("explain: batch size must be positive");
    if (refine_every <= 0) throw ConfigError("explain: refine_every must be positive");
    if (refine_until < 0) throw ConfigError("explain: refine_until must be non-negative");
    if (max_iters <= 0) throw ConfigError("explain: max_iters must be positive");
}

void InpaintSpec::validate(const Classifier& net) const {
    if (mask.shape != net.input_shape_vec())
        throw ConfigError("inpaint: mask does not match the classifier input shape");
    for (double v : mask.data)
        if (v != 0.0 && v != 1.0) throw ConfigError("inpaint: mask must be binary");
    if (seed.shape != net.input_shape_vec())
        throw ConfigError("inpaint: seed does not match the classifier input shape");
}

Tensor explain_gradient(const Classifier& net, const Tensor& seed,
                        const std::vector<Tensor>& pool_batch, const Tensor& p,
                        int target_label, double alpha, unsigned threads) {
    if (pool_batch.empty()) throw InputError("explain_gradient: empty batch");
    std::vector<Tensor> grads(pool_batch.size());
    parallel_for(pool_batch.size(), threads, [&](std::size_t i) {
        grads[i] = input_gradient(net, perturb_and_clip(pool_batch[i], p), target_label);
    });
    Tensor mean(grads.front().shape);
    for (const auto& g : grads) mean += g;
    mean *= 1.0 / static_cast<double>(grads.size());

    Tensor seed_grad = input_gradient(net, perturb_and_clip(seed, p), target_label);
    Tensor xi(seed_grad.shape);
    for (std::size_t i = 0; i < xi.data.size(); ++i)
        xi.data[i] = alpha * seed_grad.data[i] + (1.0 - alpha) * mean.data[i];
    return xi;
}

double direction_score(const Classifier& net, const Tensor& q,
                       const std::vector<Tensor>& eval_batch, int target_label,
                       unsigned threads) {
    if (eval_batch.empty()) throw InputError("direction_score: empty batch");
    std::vector<double> scores(eval_batch.size());
    parallel_for(eval_batch.size(), threads, [&](std::size_t i) {
        Tensor logits = forward(net, perturb_and_clip(eval_batch[i], q));
        scores[i] = -cross_entropy(logits, target_label);  // log P(target | .)
    });
    double s = 0.0;
    for (double v : scores) s += v;
    return s / static_cast<double>(scores.size());
}

Tensor direction_inversion_check(const Classifier& net, const Tensor& p_candidate,
                                 const std::vector<Tensor>& eval_batch, int target_label,
                                 unsigned threads) {
    Tensor inverted = -p_candidate;
    const double straight = direction_score(net, p_candidate, eval_batch, target_label, threads);
    const double flipped = direction_score(net, inverted, eval_batch, target_label, threads);
    // "equally good (or better)": ties choose the inverted direction.
    return flipped >= straight ? inverted : p_candidate;
}

ExplainResult run_explain(const Classifier& net, const std::vector<Tensor>& pool,
                          const ExplainConfig& config) {
    config.validate(net);
    if (pool.empty()) throw InputError("run_explain: empty pool");

    const auto shape = net.input_shape_vec();
    Tensor p(shape);
    MomentState moments(shape);
    Rng rng(config.rng_seed);
    AttackTrace trace;

    // Stopping-rule evaluation set: pool plus the seed.
    std::vector<Tensor> eval_set = pool;
    eval_set.push_back(config.seed);

    auto evaluate = [&](long long iter) {
        auto [ratio, hist] =
            fooling_histogram(net, p, eval_set, config.target_label, config.threads);
        double best = trace.rows.empty() ? ratio : std::max(trace.rows.back().best_ratio, ratio);
        trace.rows.push_back({iter, ratio, best, p.linf_norm(), p.l2_norm(), std::move(hist)});
        return ratio;
    };

    auto iterate_once = [&](long long iter) {
        std::vector<Tensor> batch;
        batch.reserve(config.batch_size);
        for (std::size_t i = 0; i < config.batch_size; ++i)
            batch.push_back(pool[rng.next_index(pool.size())]);

        Tensor xi = explain_gradient(net, config.seed, batch, p, config.target_label,
                                     config.seed_weight, config.threads);
        moment_update(moments, xi);
        Tensor step = bias_corrected_step(moments);
        if (!step_and_normalize(p, step)) trace.events.push_back({iter, "stall"});

        // Inversion is judged on the mini-batch of this step, seed included.
        batch.push_back(config.seed);
        p = direction_inversion_check(net, p, batch, config.target_label, config.threads);
        p = project(p, config.bound);
    };

    auto refine_now = [&](long long iter) {
        RefineResult r = refine_perturbation(net, p);
        p = std::move(r.p);
        trace.events.push_back({iter, r.degenerate ? "refine-degenerate" : "refine"});
    };

    // Phase A: optimize until the fooled fraction of pool + seed reaches gamma.
    long long t = 0;
    double ratio = evaluate(0);
    while (ratio < config.gamma && t < config.max_iters) {
        ++t;
        iterate_once(t);
        ratio = evaluate(t);
    }
    const bool reached = ratio >= config.gamma;

    // Phase B: one refinement.
    refine_now(t);

    // Phase C: fixed-length resumption with periodic refinement.
    for (long long k = 1; k <= config.refine_until; ++k) {
        ++t;
        iterate_once(t);
        ratio = evaluate(t);
        if (k % config.refine_every == 0) refine_now(t);
    }

    trace.final_iter = t;
    trace.final_ratio = ratio;
    trace.target_reached = reached;

    ExplainResult result;
    // The final refinement scales the signal by lambda, so the output is not
    // confined to the optimization ball any more; it is reported unbounded.
    result.perturbation.bound = NormBound{NormMode::unbounded, 0.0};
    result.perturbation.p = std::move(p);
    result.trace = std::move(trace);
    return result;
}

double masked_objective_loss(const Classifier& net, const std::vector<Tensor>& samples,
                             const Tensor& p, const InpaintSpec& spec, int target_label) {
    if (samples.empty()) throw InputError("masked_objective_loss: empty sample set");
    double loss = 0.0;
    for (const auto& s : samples) {
        Tensor shifted = s;
        shifted -= p;  // Eq-style subtraction, no clipping
        loss += cross_entropy(forward(net, shifted), target_label);
    }
    loss /= static_cast<double>(samples.size());
    double penalty = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double masked = p.data[i] * (1.0 - spec.mask.data[i]);
        penalty += masked * masked;
    }
    return loss + spec.beta * penalty;
}

Tensor masked_objective_gradient(const Classifier& net, const std::vector<Tensor>& samples,
                                 const Tensor& p, const InpaintSpec& spec, int target_label,
                                 unsigned threads) {
    if (samples.empty()) throw InputError("masked_objective_gradient: empty sample set");
    spec.validate(net);
    check_same_shape(p, spec.mask, "masked_objective_gradient");

    std::vector<Tensor> grads(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        Tensor shifted = samples[i];
        shifted -= p;
        grads[i] = input_gradient(net, shifted, target_label);
    });
    Tensor xi(p.shape);
    for (const auto& g : grads) xi += g;
    // d/dp J(s - p) = -grad_s' J, then the quadratic penalty outside the mask.
    xi *= -1.0 / static_cast<double>(samples.size());
    for (std::size_t i = 0; i < xi.data.size(); ++i) {
        const double outside = 1.0 - spec.mask.data[i];
        xi.data[i] += 2.0 * spec.beta * p.data[i] * outside * outside;
    }
    return xi;
}

// ---------------------------------------------------------------------------
// Gaussian input synthesis
// ---------------------------------------------------------------------------

namespace {

Tensor downsample_average(const Tensor& image, std::size_t factor) {
    const std::size_t H = image.shape[0], W = image.shape[1], C = image.shape[2];
    if (H % factor != 0 || W % factor != 0)
        throw ConfigError("gaussian sampler: image sides must be divisible by the down factor");
    const std::size_t h = H / factor, w = W / factor;
    Tensor out({h, w, C});
    const double scale = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::size_t di = 0; di < factor; ++di)
                    for (std::size_t dj = 0; dj < factor; ++dj)
                        s += image.at(i * factor + di, j * factor + dj, c);
                out.at(i, j, c) = s * scale;
            }
    return out;
}

// Plain lower Cholesky; throws NumericError when a pivot is not positive.
Tensor cholesky(const Tensor& a, std::size_t n) {
    Tensor l({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a.data[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= l.data[i * n + k] * l.data[j * n + k];
            if (i == j) {
                if (s <= 0.0)
                    throw NumericError("gaussian sampler: Cholesky failed after jitter");
                l.data[i * n + i] = std::sqrt(s);
            } else {
                l.data[i * n + j] = s / l.data[j * n + j];
            }
        }
    }
    return l;
}

}  // namespace

void refresh_cholesky(GaussianSampler& sampler) {
    const std::size_t n = sampler.dim();
    Tensor jittered = sampler.cov;
    for (std::size_t i = 0; i < n; ++i) jittered.data[i * n + i] += sampler.jitter;
    sampler.chol = cholesky(jittered, n);
}

GaussianSampler build_gaussian_sampler(const std::vector<Tensor>& images,
                                       std::size_t down_factor, double jitter) {
    if (images.size() < 2)
        throw InputError("gaussian sampler: needs at least two target-class images");
    GaussianSampler s;
    s.input_h = images.front().shape[0];
    s.input_w = images.front().shape[1];
    s.channels = images.front().shape[2];
    s.jitter = jitter;

    std::vector<Tensor> down;
    down.reserve(images.size());
    for (const auto& img : images) {
        if (img.shape != images.front().shape)
            throw InputError("gaussian sampler: images must share a shape");
        down.push_back(downsample_average(img, down_factor));
    }
    s.down_h = down.front().shape[0];
    s.down_w = down.front().shape[1];

    const std::size_t n = s.dim();
    s.mean = Tensor({n});
    for (const auto& d : down) s.mean += d;
    s.mean *= 1.0 / static_cast<double>(down.size());

    s.cov = Tensor({n, n});
    for (const auto& d : down) {
        for (std::size_t i = 0; i < n; ++i) {
            const double di = d.data[i] - s.mean.data[i];
            for (std::size_t j = 0; j <= i; ++j)
                s.cov.data[i * n + j] += di * (d.data[j] - s.mean.data[j]);
        }
    }
    const double scale = 1.0 / static_cast<double>(down.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            s.cov.data[i * n + j] *= scale;
            s.cov.data[j * n + i] = s.cov.data[i * n + j];
        }

    refresh_cholesky(s);
    return s;
}

Tensor sample_latent(const GaussianSampler& sampler, Rng& rng) {
    const std::size_t n = sampler.dim();
    std::vector<double> z(n);
    for (double& v : z) v = rng.next_gaussian();
    Tensor latent({sampler.down_h, sampler.down_w, sampler.channels});
    for (std::size_t i = 0; i < n; ++i) {
        double acc = sampler.mean.data[i];
        const double* row = sampler.chol.data.data() + i * n;
        for (std::size_t k = 0; k <= i; ++k) acc += row[k] * z[k];
        latent.data[i] = acc;
    }
    return latent;
}

Tensor latent_to_input(const GaussianSampler& sampler, const Tensor& latent) {
    Tensor out({sampler.input_h, sampler.input_w, sampler.channels});
    for (std::size_t c = 0; c < sampler.channels; ++c) {
        Tensor plane({sampler.down_h, sampler.down_w});
        for (std::size_t i = 0; i < sampler.down_h; ++i)
            for (std::size_t j = 0; j < sampler.down_w; ++j)
                plane.data[i * sampler.down_w + j] = latent.at(i, j, c);
        Tensor up = bicubic_upsample(plane, sampler.input_h, sampler.input_w);
        for (std::size_t i = 0; i < sampler.input_h; ++i)
            for (std::size_t j = 0; j < sampler.input_w; ++j)
                out.at(i, j, c) = std::clamp(up.data[i * sampler.input_w + j], 0.0, 255.0);
    }
    return out;
}

GaussianInputs gaussian_inputs(const std::vector<Tensor>& target_class_images,
                               std::size_t count, Rng& rng, std::size_t down_factor,
                               double jitter) {
    if (count == 0) throw InputError("gaussian_inputs: count must be positive");
    GaussianSampler sampler = build_gaussian_sampler(target_class_images, down_factor, jitter);
    GaussianInputs out;
    out.seed = latent_to_input(sampler, sample_latent(sampler, rng));
    out.pool.reserve(count - 1);
    for (std::size_t i = 1; i < count; ++i)
        out.pool.push_back(latent_to_input(sampler, sample_latent(sampler, rng)));
    return out;
}

std::pair<std::vector<Tensor>, std::vector<std::size_t>> build_explain_pool(
    const LabeledDataset& data, int target_label, std::size_t pool_size, Rng& rng) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < data.samples.size(); ++i)
        if (data.samples[i].label != target_label) candidates.push_back(i);
    if (candidates.size() < pool_size)
        throw InputError("build_explain_pool: not enough non-target samples");
    rng.shuffle(candidates);
    candidates.resize(pool_size);
    std::vector<Tensor> images;
    images.reserve(pool_size);
    for (std::size_t idx : candidates) images.push_back(data.samples[idx].image);
    return {std::move(images), std::move(candidates)};
}

}  // namespace pertfool
