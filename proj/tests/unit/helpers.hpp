#pragma once

// Shared test utilities: small random networks, the central-finite-difference
// gradient oracle, and random tensors. Everything here is test-side only and
// independent of the gradient path it checks.

#include <cmath>
#include <vector>

#include "pertfool/nn.hpp"
#include "pertfool/rng.hpp"

namespace testutil {

using namespace pertfool;

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = 0.0,
                            double hi = 255.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_uniform(std::vector<std::size_t> shape, Rng& rng, double scale) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

/// Small dense net: flatten(in) -> dense(hidden) -> relu -> dense(classes).
inline Classifier make_dense_net(std::size_t h, std::size_t w, std::size_t c,
                                 std::size_t hidden, int classes, Rng& rng) {
    Classifier net;
    net.num_classes = classes;
    net.input_shape = {h, w, c};
    const std::size_t in = h * w * c;
    net.layers.push_back(Conv2d{1, 1, c, c, 1, 0,
                                [&] {
                                    Tensor t({1, 1, c, c});
                                    for (std::size_t i = 0; i < c; ++i)
                                        t.data[i * c + i] = 1.0;  // identity stem
                                    return t;
                                }(),
                                Tensor({c})});
    net.conv_base_end = 1;
    net.layers.push_back(Flatten{});
    Dense d1{in, hidden, random_uniform({in, hidden}, rng, 0.05), Tensor({hidden})};
    net.layers.push_back(d1);
    net.layers.push_back(Relu{});
    Dense d2{hidden, static_cast<std::size_t>(classes),
             random_uniform({hidden, static_cast<std::size_t>(classes)}, rng, 0.3),
             Tensor({static_cast<std::size_t>(classes)})};
    net.layers.push_back(d2);
    net.validate();
    return net;
}

/// Small conv net: conv3x3(pad 1) -> relu -> maxpool2 -> flatten -> dense.
inline Classifier make_conv_net(std::size_t h, std::size_t w, std::size_t c,
                                std::size_t filters, int classes, Rng& rng) {
    Classifier net;
    net.num_classes = classes;
    net.input_shape = {h, w, c};
    Conv2d conv{3, 3, c, filters, 1, 1,
                random_uniform({3, 3, c, filters}, rng, 0.2), Tensor({filters})};
    for (double& b : conv.bias.data) b = rng.uniform(-0.1, 0.1);
    net.layers.push_back(conv);
    net.layers.push_back(Relu{});
    net.layers.push_back(MaxPool2d{2, 2});
    net.conv_base_end = 3;
    const std::size_t flat = (h / 2) * (w / 2) * filters;
    net.layers.push_back(Flatten{});
    Dense head{flat, static_cast<std::size_t>(classes),
               random_uniform({flat, static_cast<std::size_t>(classes)}, rng, 0.05),
               Tensor({static_cast<std::size_t>(classes)})};
    net.layers.push_back(head);
    net.validate();
    return net;
}

/// Central finite differences of cross_entropy(forward(x), label), step 1e-5.
inline Tensor fd_input_gradient(const Classifier& net, const Tensor& x, int label,
                                double step = 1e-5) {
    Tensor g(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        probe.data[i] = x.data[i] + step;
        double up = cross_entropy(forward(net, probe), label);
        probe.data[i] = x.data[i] - step;
        double down = cross_entropy(forward(net, probe), label);
        probe.data[i] = x.data[i];
        g.data[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// Per-coordinate relative error against the oracle, floored at a small
/// fraction of the gradient scale so noise on near-zero coordinates does not
/// dominate.
inline double max_relative_error(const Tensor& got, const Tensor& oracle) {
    double scale = oracle.linf_norm();
    double worst = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) {
        double denom = std::max(std::abs(oracle.data[i]), 1e-3 * (scale + 1.0));
        worst = std::max(worst, std::abs(got.data[i] - oracle.data[i]) / denom);
    }
    return worst;
}

}  // namespace testutil
