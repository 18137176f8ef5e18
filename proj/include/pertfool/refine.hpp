#pragma once

#include "pertfool/nn.hpp"

namespace pertfool {

/// Per-pixel mean across channels of an (H', W', C') activation stack.
Tensor channel_average(const Tensor& omega);

struct OtsuResult {
    double threshold = 0.0;
    bool degenerate = false;  // fewer than two distinct values
};

/// Otsu threshold over a 256-bin histogram spanning [min, max]. The returned
/// value is the bin boundary maximizing the between-class variance
/// w0*w1*(mu0-mu1)^2; ties pick the smaller boundary. Class means use the
/// actual per-bin value sums, not bin centers.
OtsuResult otsu_threshold(const Tensor& a);

/// a(x,y) > tau -> lambda, else 0 (strict inequality at the boundary).
Tensor binarize_scale(const Tensor& a, double tau, double lambda = 5.0);

/// Separable cubic-convolution upsampling (Keys kernel, a = -0.5), source
/// mapping src = (dst + 0.5) * (in/out) - 0.5, edge replication.
Tensor bicubic_upsample(const Tensor& field, std::size_t out_h, std::size_t out_w);

/// Weights of the 4-tap Keys kernel for a given fractional offset; exposed
/// so tests can check the partition of unity directly.
void keys_weights(double frac, double w[4]);

struct RefineResult {
    Tensor p;
    Tensor mask;             // the upsampled {0, lambda} field, one channel
    Tensor activation_mean;  // the low-resolution averaged base signal
    double threshold = 0.0;
    bool degenerate = false;
};

/// Perturbation refinement: feeds p itself through the convolutional base,
/// averages the activation channels, Otsu-binarizes to {0, lambda}, bicubic-
/// upsamples to the input size and multiplies into p, clamping the result to
/// [-255, 255]. A degenerate threshold zeroes the perturbation and is
/// reported via the flag.
RefineResult refine_perturbation(const Classifier& net, const Tensor& p, double lambda = 5.0);

}  // namespace pertfool
