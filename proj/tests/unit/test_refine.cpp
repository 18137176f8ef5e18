#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "pertfool/refine.hpp"

using namespace pertfool;
using namespace testutil;

namespace {

// Oracle A: exhaustive search over all 255 bin boundaries, recomputing both
// class statistics from the raw values for every boundary.
double otsu_oracle_boundaries(const std::vector<double>& values) {
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double width = (hi - lo) / 256.0;
    auto bin_of = [&](double v) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        return b >= 256 ? 255 : b;
    };
    double best_var = -1.0;
    std::size_t best_j = 1;
    for (std::size_t j = 1; j < 256; ++j) {
        double w0 = 0, w1 = 0, s0 = 0, s1 = 0;
        for (double v : values) {
            if (bin_of(v) < j) {
                w0 += 1;
                s0 += v;
            } else {
                w1 += 1;
                s1 += v;
            }
        }
        if (w0 == 0 || w1 == 0) continue;
        double mu0 = s0 / w0, mu1 = s1 / w1;
        double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_j = j;
        }
    }
    return lo + static_cast<double>(best_j) * width;
}

// Oracle B: continuous exhaustive search over data midpoints (no binning).
double otsu_oracle_continuous(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double best_var = -1.0, best_tau = values.front();
    for (std::size_t cut = 1; cut < values.size(); ++cut) {
        if (values[cut] == values[cut - 1]) continue;
        double tau = 0.5 * (values[cut] + values[cut - 1]);
        double w0 = static_cast<double>(cut), w1 = static_cast<double>(values.size() - cut);
        double s0 = 0, s1 = 0;
        for (std::size_t i = 0; i < cut; ++i) s0 += values[i];
        for (std::size_t i = cut; i < values.size(); ++i) s1 += values[i];
        double var = w0 * w1 * (s0 / w0 - s1 / w1) * (s0 / w0 - s1 / w1);
        if (var > best_var) {
            best_var = var;
            best_tau = tau;
        }
    }
    return best_tau;
}

// Oracle C: direct (non-separable) cubic-convolution resampling.
double keys_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
    return 0.0;
}

Tensor bicubic_oracle(const Tensor& in, std::size_t out_h, std::size_t out_w) {
    const std::size_t H = in.shape[0], W = in.shape[1];
    Tensor out({out_h, out_w});
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            const double sy = (y + 0.5) * (static_cast<double>(H) / out_h) - 0.5;
            const double sx = (x + 0.5) * (static_cast<double>(W) / out_w) - 0.5;
            const auto iy = static_cast<std::ptrdiff_t>(std::floor(sy));
            const auto ix = static_cast<std::ptrdiff_t>(std::floor(sx));
            double acc = 0.0;
            for (std::ptrdiff_t ky = -1; ky <= 2; ++ky)
                for (std::ptrdiff_t kx = -1; kx <= 2; ++kx) {
                    auto cy = std::clamp<std::ptrdiff_t>(iy + ky, 0, H - 1);
                    auto cx = std::clamp<std::ptrdiff_t>(ix + kx, 0, W - 1);
                    acc += keys_kernel(sy - static_cast<double>(iy + ky)) *
                           keys_kernel(sx - static_cast<double>(ix + kx)) *
                           in.data[static_cast<std::size_t>(cy) * W +
                                   static_cast<std::size_t>(cx)];
                }
            out.data[y * out_w + x] = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("channel_average") {
    SUBCASE("single channel is the identity") {
        Rng rng(5);
        Tensor omega = random_uniform({3, 4, 1}, rng, 2.0);
        Tensor a = channel_average(omega);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data[i] == omega.data[i]);
    }
    SUBCASE("two channels average") {
        Tensor omega({1, 1, 2});
        omega.data = {1.0, 3.0};
        CHECK(channel_average(omega).data[0] == doctest::Approx(2.0));
    }
    SUBCASE("matches a naive triple loop") {
        Rng rng(7);
        Tensor omega = random_uniform({5, 6, 7}, rng, 3.0);
        Tensor a = channel_average(omega);
        for (std::size_t h = 0; h < 5; ++h)
            for (std::size_t w = 0; w < 6; ++w) {
                double s = 0.0;
                for (std::size_t c = 0; c < 7; ++c) s += omega.at(h, w, c);
                CHECK(a.data[h * 6 + w] == doctest::Approx(s / 7.0).epsilon(1e-12));
            }
    }
    SUBCASE("linearity within 1e-12") {
        Rng rng(11);
        Tensor o1 = random_uniform({4, 4, 3}, rng, 2.0);
        Tensor o2 = random_uniform({4, 4, 3}, rng, 2.0);
        Tensor sum = o1;
        sum += o2;
        Tensor lhs = channel_average(sum);
        Tensor a1 = channel_average(o1);
        Tensor a2 = channel_average(o2);
        for (std::size_t i = 0; i < lhs.numel(); ++i)
            CHECK(std::abs(lhs.data[i] - (a1.data[i] + a2.data[i])) < 1e-12);
    }
}

TEST_CASE("otsu_threshold") {
    SUBCASE("two clusters split at the first separating boundary") {
        Tensor a({6});
        a.data = {0, 0, 0, 10, 10, 10};
        OtsuResult r = otsu_threshold(a);
        CHECK_FALSE(r.degenerate);
        CHECK(r.threshold == doctest::Approx(otsu_oracle_boundaries(a.data)));
        // The threshold separates the two groups.
        for (double v : a.data) {
            if (v == 0.0) CHECK(v <= r.threshold);
            if (v == 10.0) CHECK(v > r.threshold);
        }
    }
    SUBCASE("constant input is degenerate") {
        Tensor a({4}, 3.5);
        OtsuResult r = otsu_threshold(a);
        CHECK(r.degenerate);
        CHECK(r.threshold == 3.5);
        Tensor mask = binarize_scale(a, r.threshold);
        for (double v : mask.data) CHECK(v == 0.0);
    }
    SUBCASE("equals the boundary-exhaustive oracle on random arrays") {
        Rng rng(13);
        for (int trial = 0; trial < 40; ++trial) {
            std::vector<double> values(64);
            for (double& v : values) v = rng.uniform(-5.0, 5.0);
            Tensor a({values.size()}, values);
            CHECK(otsu_threshold(a).threshold == otsu_oracle_boundaries(values));
        }
    }
    SUBCASE("bimodal mixtures: oracle equality and clean separation") {
        // Boundaries across the whole gap tie on between-class variance, so
        // the smaller-threshold rule picks the first separating boundary;
        // the exhaustive boundary search must agree exactly and the result
        // must split the two components.
        Rng rng(17);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> values;
            double mu0 = rng.uniform(-4.0, -1.0), mu1 = rng.uniform(1.0, 4.0);
            std::size_t n0 = 120;
            for (std::size_t i = 0; i < n0; ++i)
                values.push_back(mu0 + 0.4 * rng.next_gaussian());
            for (int i = 0; i < 80; ++i) values.push_back(mu1 + 0.4 * rng.next_gaussian());
            Tensor a({values.size()}, values);
            double tau = otsu_threshold(a).threshold;
            CHECK(tau == otsu_oracle_boundaries(values));
            // component separation (the clusters are several sigma apart)
            std::size_t below = 0;
            for (double v : values)
                if (v <= tau) ++below;
            CHECK(below == n0);
            // and the continuous optimum lies on the same tie plateau: both
            // separate identically
            double cont = otsu_oracle_continuous(values);
            std::size_t below_cont = 0;
            for (double v : values)
                if (v <= cont) ++below_cont;
            CHECK(below == below_cont);
        }
    }
}

TEST_CASE("binarize_scale uses a strict boundary") {
    Tensor a({2});
    a.data = {1.0, 3.0};
    Tensor out = binarize_scale(a, 2.0);
    CHECK(out.data == std::vector<double>{0.0, 5.0});

    Tensor boundary({3});
    boundary.data = {2.0, 2.0 + 1e-12, 1.0};
    Tensor b = binarize_scale(boundary, 2.0, 7.0);
    CHECK(b.data[0] == 0.0);  // exactly tau stays zero
    CHECK(b.data[1] == 7.0);
    CHECK(b.data[2] == 0.0);

    Tensor below({3});
    below.data = {-1.0, 0.0, 0.5};
    Tensor z = binarize_scale(below, 0.5);
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("bicubic_upsample") {
    SUBCASE("kernel weights form a partition of unity") {
        Rng rng(19);
        for (int trial = 0; trial < 1000; ++trial) {
            double w[4];
            keys_weights(rng.next_double(), w);
            CHECK(std::abs(w[0] + w[1] + w[2] + w[3] - 1.0) < 1e-12);
        }
    }
    SUBCASE("constant fields are reproduced") {
        Tensor in({3, 5}, 4.25);
        Tensor out = bicubic_upsample(in, 11, 17);
        for (double v : out.data) CHECK(std::abs(v - 4.25) < 1e-9);
    }
    SUBCASE("linear ramps are reproduced in the interior") {
        const std::size_t H = 8, W = 8, OH = 32, OW = 32;
        Tensor in({H, W});
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c)
                in.data[r * W + c] = 3.0 * static_cast<double>(r) - 2.0 * static_cast<double>(c);
        Tensor out = bicubic_upsample(in, OH, OW);
        const double sr = static_cast<double>(H) / OH, sc = static_cast<double>(W) / OW;
        for (std::size_t r = 0; r < OH; ++r)
            for (std::size_t c = 0; c < OW; ++c) {
                double src_r = (r + 0.5) * sr - 0.5;
                double src_c = (c + 0.5) * sc - 0.5;
                // interior: the 4-tap support must not touch the replicated edge
                if (src_r < 1.0 || src_r > H - 3.0 || src_c < 1.0 || src_c > W - 3.0) continue;
                CHECK(std::abs(out.data[r * OW + c] - (3.0 * src_r - 2.0 * src_c)) < 1e-9);
            }
    }
    SUBCASE("separable implementation matches the direct 2D oracle") {
        Rng rng(23);
        Tensor in = random_uniform({7, 9}, rng, 10.0);
        Tensor fast = bicubic_upsample(in, 23, 31);
        Tensor slow = bicubic_oracle(in, 23, 31);
        for (std::size_t i = 0; i < fast.numel(); ++i)
            CHECK(std::abs(fast.data[i] - slow.data[i]) < 1e-10);
    }
    SUBCASE("shrinking is rejected") {
        Tensor in({4, 4});
        CHECK_THROWS_AS(bicubic_upsample(in, 2, 8), InputError);
    }
}

TEST_CASE("refine_perturbation") {
    Rng rng(29);
    Classifier net = make_conv_net(8, 8, 1, 4, 3, rng);

    SUBCASE("zero perturbation refines to zero") {
        RefineResult r = refine_perturbation(net, Tensor({8, 8, 1}));
        for (double v : r.p.data) CHECK(v == 0.0);
    }
    SUBCASE("output equals clamp(p * mask) with the returned mask") {
        Tensor p = random_uniform({8, 8, 1}, rng, 80.0);
        RefineResult r = refine_perturbation(net, p);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double expect = std::clamp(p.data[i] * r.mask.data[i], -255.0, 255.0);
            CHECK(r.p.data[i] == expect);
        }
    }
    SUBCASE("output always stays in [-255, 255]") {
        for (int trial = 0; trial < 10; ++trial) {
            Tensor p = random_uniform({8, 8, 1}, rng, 255.0);
            RefineResult r = refine_perturbation(net, p);
            for (double v : r.p.data) {
                CHECK(v <= 255.0);
                CHECK(v >= -255.0);
            }
        }
    }
    SUBCASE("support is confined to the dilated salient region") {
        Tensor p = random_uniform({8, 8, 1}, rng, 50.0);
        RefineResult r = refine_perturbation(net, p);

        // Independent mask recomputation from the base activations.
        Tensor omega = conv_base_activations(net, p);
        Tensor a = channel_average(omega);
        double tau = otsu_oracle_boundaries(a.data);
        const std::size_t ah = a.shape[0], aw = a.shape[1];
        // Salient cells in the low-res grid dilated by the cubic support: a
        // cell influences output pixels within 2 taps, i.e. 4 output pixels
        // at this 2x scale.
        std::vector<char> allowed(8 * 8, 0);
        for (std::size_t i = 0; i < ah; ++i)
            for (std::size_t j = 0; j < aw; ++j) {
                if (a.data[i * aw + j] <= tau) continue;
                const double cy = (static_cast<double>(i) + 0.5) * 2.0;
                const double cx = (static_cast<double>(j) + 0.5) * 2.0;
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        if (std::abs(y + 0.5 - cy) <= 4.0 && std::abs(x + 0.5 - cx) <= 4.0)
                            allowed[y * 8 + x] = 1;
            }
        for (std::size_t i = 0; i < 64; ++i)
            if (std::abs(r.p.data[i]) > 1e-9) CHECK(allowed[i] == 1);
    }
    SUBCASE("degenerate threshold zeroes the output and raises the flag") {
        // A base with zero weights gives constant activations.
        Classifier flat = net;
        auto& conv = std::get<Conv2d>(flat.layers[0]);
        std::fill(conv.weights.data.begin(), conv.weights.data.end(), 0.0);
        std::fill(conv.bias.data.begin(), conv.bias.data.end(), 0.25);
        Tensor p = random_uniform({8, 8, 1}, rng, 10.0);
        RefineResult r = refine_perturbation(flat, p);
        CHECK(r.degenerate);
        for (double v : r.p.data) CHECK(v == 0.0);
    }
}
