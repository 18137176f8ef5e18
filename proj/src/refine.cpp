#include "pertfool/refine.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pertfool {

Tensor channel_average(const Tensor& omega) {
    if (omega.shape.size() != 3) throw InputError("channel_average: expects (H, W, C)");
    const std::size_t H = omega.shape[0], W = omega.shape[1], C = omega.shape[2];
    if (C == 0) throw InputError("channel_average: no channels");
    Tensor a({H, W});
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += omega.at(h, w, c);
            a.data[h * W + w] = s / static_cast<double>(C);
        }
    return a;
}

OtsuResult otsu_threshold(const Tensor& a) {
    if (a.numel() == 0) throw InputError("otsu_threshold: empty input");
    double lo = a.data[0], hi = a.data[0];
    for (double v : a.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) return {lo, true};

    constexpr std::size_t kBins = 256;
    const double width = (hi - lo) / static_cast<double>(kBins);
    std::array<long long, kBins> count{};
    std::array<double, kBins> sum{};
    for (double v : a.data) {
        auto bin = static_cast<std::size_t>((v - lo) / width);
        if (bin >= kBins) bin = kBins - 1;  // v == hi lands in the last bin
        ++count[bin];
        sum[bin] += v;
    }

    const auto total = static_cast<double>(a.numel());
    double total_sum = 0.0;
    for (double s : sum) total_sum += s;

    double best_var = -1.0;
    std::size_t best_j = 1;
    double w0 = 0.0, s0 = 0.0;
    for (std::size_t j = 1; j < kBins; ++j) {  // boundary between bins j-1 and j
        w0 += static_cast<double>(count[j - 1]);
        s0 += sum[j - 1];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = s0 / w0;
        const double mu1 = (total_sum - s0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {  // strict: ties keep the smaller boundary
            best_var = var;
            best_j = j;
        }
    }
    return {lo + static_cast<double>(best_j) * width, false};
}

Tensor binarize_scale(const Tensor& a, double tau, double lambda) {
    Tensor out = a;
    for (double& v : out.data) v = v > tau ? lambda : 0.0;
    return out;
}

void keys_weights(double frac, double w[4]) {
    // Cubic convolution kernel with a = -0.5 evaluated at the four taps
    // around the source position: offsets -(1+f), -f, 1-f, 2-f.
    constexpr double a = -0.5;
    const double f = frac;
    const double f2 = f * f;
    const double f3 = f2 * f;
    w[0] = a * (f3 - 2.0 * f2 + f);
    w[1] = (a + 2.0) * f3 - (a + 3.0) * f2 + 1.0;
    w[2] = -(a + 2.0) * f3 + (2.0 * a + 3.0) * f2 - a * f;
    w[3] = a * (f2 - f3);
}

namespace {

// One separable pass along the leading axis of a (rows, cols) field.
Tensor resample_rows(const Tensor& in, std::size_t out_rows) {
    const std::size_t R = in.shape[0], C = in.shape[1];
    Tensor out({out_rows, C});
    const double scale = static_cast<double>(R) / static_cast<double>(out_rows);
    for (std::size_t r = 0; r < out_rows; ++r) {
        const double src = (static_cast<double>(r) + 0.5) * scale - 0.5;
        const double base = std::floor(src);
        double w[4];
        keys_weights(src - base, w);
        const auto ib = static_cast<std::ptrdiff_t>(base);
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int k = -1; k <= 2; ++k) {
                std::ptrdiff_t rr = ib + k;
                if (rr < 0) rr = 0;  // edge replication
                if (rr >= static_cast<std::ptrdiff_t>(R)) rr = static_cast<std::ptrdiff_t>(R) - 1;
                acc += w[k + 1] * in.data[static_cast<std::size_t>(rr) * C + c];
            }
            out.data[r * C + c] = acc;
        }
    }
    return out;
}

Tensor transpose2d(const Tensor& in) {
    Tensor out({in.shape[1], in.shape[0]});
    for (std::size_t r = 0; r < in.shape[0]; ++r)
        for (std::size_t c = 0; c < in.shape[1]; ++c)
            out.data[c * in.shape[0] + r] = in.data[r * in.shape[1] + c];
    return out;
}

}  // namespace

Tensor bicubic_upsample(const Tensor& field, std::size_t out_h, std::size_t out_w) {
    if (field.shape.size() != 2) throw InputError("bicubic_upsample: expects (H, W)");
    if (out_h < field.shape[0] || out_w < field.shape[1])
        throw InputError("bicubic_upsample: target must not be smaller than the source");
    Tensor rows = resample_rows(field, out_h);
    Tensor cols = resample_rows(transpose2d(rows), out_w);
    return transpose2d(cols);
}

RefineResult refine_perturbation(const Classifier& net, const Tensor& p, double lambda) {
    if (p.shape != net.input_shape_vec())
        throw InputError("refine_perturbation: perturbation does not match input shape");

    // The perturbation itself is the input to the convolutional base, without
    // any range shift; it is a signal, not an image.
    Tensor omega = conv_base_activations(net, p);
    Tensor a = channel_average(omega);
    OtsuResult otsu = otsu_threshold(a);
    Tensor mask2d = binarize_scale(a, otsu.threshold, lambda);
    Tensor mask = bicubic_upsample(mask2d, net.input_shape[0], net.input_shape[1]);

    RefineResult result;
    result.threshold = otsu.threshold;
    result.degenerate = otsu.degenerate;
    result.mask = mask;
    result.activation_mean = std::move(a);
    result.p = Tensor(p.shape);
    const std::size_t C = net.input_shape[2];
    const std::size_t HW = net.input_shape[0] * net.input_shape[1];
    for (std::size_t i = 0; i < HW; ++i) {
        const double f = mask.data[i];
        for (std::size_t c = 0; c < C; ++c) {
            double v = p.data[i * C + c] * f;
            result.p.data[i * C + c] = std::clamp(v, -255.0, 255.0);
        }
    }
    return result;
}

}  // namespace pertfool
