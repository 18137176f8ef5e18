#include "pertfool/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pertfool/parallel.hpp"

namespace pertfool {

namespace {

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < k) throw ConfigError("conv2d: kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

std::size_t pool_out_dim(std::size_t in, std::size_t k, std::size_t stride) {
    if (in < k) throw ConfigError("maxpool2d: window larger than input");
    return (in - k) / stride + 1;
}

void require_rank3(const std::vector<std::size_t>& s, const char* who) {
    if (s.size() != 3) throw ConfigError(std::string(who) + ": expects an (H, W, C) input");
}

}  // namespace

const char* layer_kind_name(const LayerSpec& layer) {
    switch (layer.index()) {
        case 0: return "conv2d";
        case 1: return "relu";
        case 2: return "maxpool2d";
        case 3: return "flatten";
        default: return "dense";
    }
}

std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& in) {
    return std::visit(
        [&](const auto& l) -> std::vector<std::size_t> {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2d>) {
                require_rank3(in, "conv2d");
                if (l.stride == 0) throw ConfigError("conv2d: stride must be >= 1");
                if (in[2] != l.in_ch) throw ConfigError("conv2d: channel mismatch");
                if (l.weights.shape != std::vector<std::size_t>{l.kh, l.kw, l.in_ch, l.out_ch})
                    throw ConfigError("conv2d: weight shape inconsistent");
                if (l.bias.shape != std::vector<std::size_t>{l.out_ch})
                    throw ConfigError("conv2d: bias shape inconsistent");
                return {conv_out_dim(in[0], l.kh, l.stride, l.pad),
                        conv_out_dim(in[1], l.kw, l.stride, l.pad), l.out_ch};
            } else if constexpr (std::is_same_v<T, Relu>) {
                return in;
            } else if constexpr (std::is_same_v<T, MaxPool2d>) {
                require_rank3(in, "maxpool2d");
                if (l.stride == 0) throw ConfigError("maxpool2d: stride must be >= 1");
                return {pool_out_dim(in[0], l.k, l.stride), pool_out_dim(in[1], l.k, l.stride),
                        in[2]};
            } else if constexpr (std::is_same_v<T, Flatten>) {
                return {Tensor::numel_of(in)};
            } else {  // Dense
                if (in.size() != 1 || in[0] != l.in)
                    throw ConfigError("dense: input size mismatch");
                if (l.weights.shape != std::vector<std::size_t>{l.in, l.out})
                    throw ConfigError("dense: weight shape inconsistent");
                if (l.bias.shape != std::vector<std::size_t>{l.out})
                    throw ConfigError("dense: bias shape inconsistent");
                return {l.out};
            }
        },
        layer);
}

void Classifier::validate() const {
    if (num_classes <= 0) throw ConfigError("classifier: num_classes must be positive");
    if (input_shape[0] == 0 || input_shape[1] == 0 || input_shape[2] == 0)
        throw ConfigError("classifier: input shape must be positive");
    if (layers.empty()) throw ConfigError("classifier: no layers");
    if (conv_base_end == 0 || conv_base_end > layers.size())
        throw ConfigError("classifier: conv_base_end out of range");
    std::vector<std::size_t> s = input_shape_vec();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        s = layer_output_shape(layers[i], s);
        if (i + 1 <= conv_base_end && s.size() != 3)
            throw ConfigError("classifier: convolutional base must stay spatial");
    }
    if (s != std::vector<std::size_t>{static_cast<std::size_t>(num_classes)})
        throw ConfigError("classifier: last layer must emit num_classes logits");
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

Tensor conv_forward(const Conv2d& l, const Tensor& x) {
    const std::size_t H = x.shape[0], W = x.shape[1];
    const std::size_t Ho = conv_out_dim(H, l.kh, l.stride, l.pad);
    const std::size_t Wo = conv_out_dim(W, l.kw, l.stride, l.pad);
    Tensor y({Ho, Wo, l.out_ch});
    const double* wp = l.weights.data.data();
    const double* xp = x.data.data();
    double* yp = y.data.data();
    for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
            double* out = yp + (oh * Wo + ow) * l.out_ch;
            for (std::size_t oc = 0; oc < l.out_ch; ++oc) out[oc] = l.bias.data[oc];
            for (std::size_t ki = 0; ki < l.kh; ++ki) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * l.stride + ki) -
                                          static_cast<std::ptrdiff_t>(l.pad);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kj = 0; kj < l.kw; ++kj) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * l.stride + kj) -
                                              static_cast<std::ptrdiff_t>(l.pad);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                    const double* in =
                        xp + (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) *
                                 l.in_ch;
                    const double* wrow = wp + ((ki * l.kw + kj) * l.in_ch) * l.out_ch;
                    for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
                        const double v = in[ic];
                        const double* wv = wrow + ic * l.out_ch;
                        for (std::size_t oc = 0; oc < l.out_ch; ++oc) out[oc] += v * wv[oc];
                    }
                }
            }
        }
    }
    return y;
}

Tensor pool_forward(const MaxPool2d& l, const Tensor& x) {
    const std::size_t H = x.shape[0], W = x.shape[1], C = x.shape[2];
    const std::size_t Ho = pool_out_dim(H, l.k, l.stride);
    const std::size_t Wo = pool_out_dim(W, l.k, l.stride);
    Tensor y({Ho, Wo, C});
    for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow)
            for (std::size_t c = 0; c < C; ++c) {
                double m = x.at(oh * l.stride, ow * l.stride, c);
                for (std::size_t ki = 0; ki < l.k; ++ki)
                    for (std::size_t kj = 0; kj < l.k; ++kj) {
                        double v = x.at(oh * l.stride + ki, ow * l.stride + kj, c);
                        if (v > m) m = v;
                    }
                y.at(oh, ow, c) = m;
            }
    return y;
}

Tensor dense_forward(const Dense& l, const Tensor& x) {
    Tensor y({l.out});
    double* yp = y.data.data();
    for (std::size_t o = 0; o < l.out; ++o) yp[o] = l.bias.data[o];
    const double* wp = l.weights.data.data();
    for (std::size_t i = 0; i < l.in; ++i) {
        const double v = x.data[i];
        const double* wrow = wp + i * l.out;
        for (std::size_t o = 0; o < l.out; ++o) yp[o] += v * wrow[o];
    }
    return y;
}

Tensor layer_forward(const LayerSpec& layer, const Tensor& x) {
    return std::visit(
        [&](const auto& l) -> Tensor {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2d>) {
                return conv_forward(l, x);
            } else if constexpr (std::is_same_v<T, Relu>) {
                Tensor y = x;
                for (double& v : y.data)
                    if (v < 0.0) v = 0.0;
                return y;
            } else if constexpr (std::is_same_v<T, MaxPool2d>) {
                return pool_forward(l, x);
            } else if constexpr (std::is_same_v<T, Flatten>) {
                Tensor y = x;
                y.shape = {y.data.size()};
                return y;
            } else {
                return dense_forward(l, x);
            }
        },
        layer);
}

void check_input(const Classifier& net, const Tensor& x) {
    if (x.shape != net.input_shape_vec())
        throw InputError("classifier input does not match input_shape");
}

// acts[0] = x, acts[i + 1] = output of layer i.
std::vector<Tensor> forward_record(const Classifier& net, const Tensor& x,
                                   std::size_t upto_layer) {
    std::vector<Tensor> acts;
    acts.reserve(upto_layer + 1);
    acts.push_back(x);
    for (std::size_t i = 0; i < upto_layer; ++i)
        acts.push_back(layer_forward(net.layers[i], acts.back()));
    return acts;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct LayerGrads {
    Tensor weights;
    Tensor bias;
};

Tensor conv_backward(const Conv2d& l, const Tensor& x, const Tensor& dy, LayerGrads* pg) {
    const std::size_t H = x.shape[0], W = x.shape[1];
    const std::size_t Ho = dy.shape[0], Wo = dy.shape[1];
    Tensor dx(x.shape);
    double* dxp = dx.data.data();
    const double* xp = x.data.data();
    const double* dyp = dy.data.data();
    const double* wp = l.weights.data.data();
    double* dwp = pg ? pg->weights.data.data() : nullptr;
    double* dbp = pg ? pg->bias.data.data() : nullptr;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
        for (std::size_t ow = 0; ow < Wo; ++ow) {
            const double* dout = dyp + (oh * Wo + ow) * l.out_ch;
            if (dbp)
                for (std::size_t oc = 0; oc < l.out_ch; ++oc) dbp[oc] += dout[oc];
            for (std::size_t ki = 0; ki < l.kh; ++ki) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * l.stride + ki) -
                                          static_cast<std::ptrdiff_t>(l.pad);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kj = 0; kj < l.kw; ++kj) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * l.stride + kj) -
                                              static_cast<std::ptrdiff_t>(l.pad);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                    const std::size_t base =
                        (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) *
                        l.in_ch;
                    const std::size_t wbase = (ki * l.kw + kj) * l.in_ch * l.out_ch;
                    for (std::size_t ic = 0; ic < l.in_ch; ++ic) {
                        const double* wv = wp + wbase + ic * l.out_ch;
                        double acc = 0.0;
                        for (std::size_t oc = 0; oc < l.out_ch; ++oc) acc += dout[oc] * wv[oc];
                        dxp[base + ic] += acc;
                        if (dwp) {
                            const double v = xp[base + ic];
                            double* dwv = dwp + wbase + ic * l.out_ch;
                            for (std::size_t oc = 0; oc < l.out_ch; ++oc)
                                dwv[oc] += v * dout[oc];
                        }
                    }
                }
            }
        }
    }
    return dx;
}

Tensor pool_backward(const MaxPool2d& l, const Tensor& x, const Tensor& dy) {
    const std::size_t C = x.shape[2];
    const std::size_t Ho = dy.shape[0], Wo = dy.shape[1];
    Tensor dx(x.shape);
    // Gradient flows to the first maximum in row-major window order, matching
    // the forward scan and keeping backward deterministic under ties.
    for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow)
            for (std::size_t c = 0; c < C; ++c) {
                std::size_t bi = oh * l.stride, bj = ow * l.stride;
                double m = x.at(bi, bj, c);
                std::size_t mi = bi, mj = bj;
                for (std::size_t ki = 0; ki < l.k; ++ki)
                    for (std::size_t kj = 0; kj < l.k; ++kj) {
                        double v = x.at(bi + ki, bj + kj, c);
                        if (v > m) {
                            m = v;
                            mi = bi + ki;
                            mj = bj + kj;
                        }
                    }
                dx.at(mi, mj, c) += dy.at(oh, ow, c);
            }
    return dx;
}

Tensor dense_backward(const Dense& l, const Tensor& x, const Tensor& dy, LayerGrads* pg) {
    Tensor dx({l.in});
    const double* wp = l.weights.data.data();
    const double* dyp = dy.data.data();
    double* dwp = pg ? pg->weights.data.data() : nullptr;
    if (pg)
        for (std::size_t o = 0; o < l.out; ++o) pg->bias.data[o] += dyp[o];
    for (std::size_t i = 0; i < l.in; ++i) {
        const double* wrow = wp + i * l.out;
        double acc = 0.0;
        for (std::size_t o = 0; o < l.out; ++o) acc += dyp[o] * wrow[o];
        dx.data[i] = acc;
        if (dwp) {
            const double v = x.data[i];
            double* dwrow = dwp + i * l.out;
            for (std::size_t o = 0; o < l.out; ++o) dwrow[o] += v * dyp[o];
        }
    }
    return dx;
}

Tensor layer_backward(const LayerSpec& layer, const Tensor& x, const Tensor& dy,
                      LayerGrads* pg) {
    return std::visit(
        [&](const auto& l) -> Tensor {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2d>) {
                return conv_backward(l, x, dy, pg);
            } else if constexpr (std::is_same_v<T, Relu>) {
                Tensor dx = dy;
                for (std::size_t i = 0; i < dx.data.size(); ++i)
                    if (x.data[i] <= 0.0) dx.data[i] = 0.0;
                return dx;
            } else if constexpr (std::is_same_v<T, MaxPool2d>) {
                return pool_backward(l, x, dy);
            } else if constexpr (std::is_same_v<T, Flatten>) {
                Tensor dx = dy;
                dx.shape = x.shape;
                return dx;
            } else {
                return dense_backward(l, x, dy, pg);
            }
        },
        layer);
}

Tensor backprop(const Classifier& net, const std::vector<Tensor>& acts, Tensor dlogits,
                std::vector<LayerGrads>* param_grads) {
    Tensor d = std::move(dlogits);
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        LayerGrads* pg = param_grads ? &(*param_grads)[i] : nullptr;
        d = layer_backward(net.layers[i], acts[i], d, pg);
    }
    return d;
}

}  // namespace

Tensor forward(const Classifier& net, const Tensor& x) {
    check_input(net, x);
    Tensor a = x;
    for (const auto& layer : net.layers) a = layer_forward(layer, a);
    return a;
}

double cross_entropy(const Tensor& logits, int label) {
    const std::size_t n = logits.numel();
    if (label < 0 || static_cast<std::size_t>(label) >= n)
        throw InputError("cross_entropy: label out of range");
    double m = logits.data[0];
    for (double v : logits.data) m = std::max(m, v);
    double s = 0.0;
    for (double v : logits.data) s += std::exp(v - m);
    return m + std::log(s) - logits.data[static_cast<std::size_t>(label)];
}

std::vector<double> softmax(const Tensor& logits) {
    double m = logits.data[0];
    for (double v : logits.data) m = std::max(m, v);
    std::vector<double> p(logits.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits.data[i] - m);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

std::pair<int, double> predict_with_confidence(const Classifier& net, const Tensor& x) {
    auto p = softmax(forward(net, x));
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;  // strict: ties keep the lowest index
    return {static_cast<int>(best), p[best]};
}

std::pair<Tensor, double> input_gradient_with_loss(const Classifier& net, const Tensor& x,
                                                   int label) {
    check_input(net, x);
    if (label < 0 || label >= net.num_classes)
        throw InputError("input_gradient: label out of range");
    auto acts = forward_record(net, x, net.layers.size());
    const Tensor& logits = acts.back();
    double loss = cross_entropy(logits, label);
    auto probs = softmax(logits);
    Tensor dlogits({probs.size()});
    for (std::size_t i = 0; i < probs.size(); ++i) dlogits.data[i] = probs[i];
    dlogits.data[static_cast<std::size_t>(label)] -= 1.0;
    return {backprop(net, acts, std::move(dlogits), nullptr), loss};
}

Tensor input_gradient(const Classifier& net, const Tensor& x, int label) {
    return input_gradient_with_loss(net, x, label).first;
}

Tensor conv_base_activations(const Classifier& net, const Tensor& x) {
    if (net.conv_base_end == 0 || net.conv_base_end > net.layers.size())
        throw ConfigError("conv_base_activations: conv_base_end undefined for this classifier");
    check_input(net, x);
    Tensor a = x;
    for (std::size_t i = 0; i < net.conv_base_end; ++i) a = layer_forward(net.layers[i], a);
    return a;
}

// ---------------------------------------------------------------------------
// Construction & training
// ---------------------------------------------------------------------------

namespace {

Tensor he_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

std::vector<LayerGrads> make_grad_slots(const Classifier& net) {
    std::vector<LayerGrads> g(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* c = std::get_if<Conv2d>(&net.layers[i])) {
            g[i].weights = Tensor(c->weights.shape);
            g[i].bias = Tensor(c->bias.shape);
        } else if (const auto* d = std::get_if<Dense>(&net.layers[i])) {
            g[i].weights = Tensor(d->weights.shape);
            g[i].bias = Tensor(d->bias.shape);
        }
    }
    return g;
}

void zero_grads(std::vector<LayerGrads>& g) {
    for (auto& lg : g) {
        std::fill(lg.weights.data.begin(), lg.weights.data.end(), 0.0);
        std::fill(lg.bias.data.begin(), lg.bias.data.end(), 0.0);
    }
}

void apply_sgd(Classifier& net, const std::vector<LayerGrads>& g, double step) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (auto* c = std::get_if<Conv2d>(&net.layers[i])) {
            for (std::size_t k = 0; k < c->weights.data.size(); ++k)
                c->weights.data[k] -= step * g[i].weights.data[k];
            for (std::size_t k = 0; k < c->bias.data.size(); ++k)
                c->bias.data[k] -= step * g[i].bias.data[k];
        } else if (auto* d = std::get_if<Dense>(&net.layers[i])) {
            for (std::size_t k = 0; k < d->weights.data.size(); ++k)
                d->weights.data[k] -= step * g[i].weights.data[k];
            for (std::size_t k = 0; k < d->bias.data.size(); ++k)
                d->bias.data[k] -= step * g[i].bias.data[k];
        }
    }
}

}  // namespace

Classifier make_reference_classifier(int num_classes, std::size_t h, std::size_t w,
                                     std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Classifier net;
    net.num_classes = num_classes;
    net.input_shape = {h, w, c};

    Conv2d c1;
    c1.kh = c1.kw = 3;
    c1.in_ch = c;
    c1.out_ch = 16;
    c1.stride = 1;
    c1.pad = 1;
    c1.weights = he_uniform({3, 3, c, 16}, 3 * 3 * c, rng);
    // He init assumes unit-scale inputs; compensate for the [0, 255] range.
    for (double& v : c1.weights.data) v /= 255.0;
    c1.bias = Tensor({16});

    Conv2d c2;
    c2.kh = c2.kw = 3;
    c2.in_ch = 16;
    c2.out_ch = 32;
    c2.stride = 1;
    c2.pad = 1;
    c2.weights = he_uniform({3, 3, 16, 32}, 3 * 3 * 16, rng);
    c2.bias = Tensor({32});

    net.layers.push_back(c1);
    net.layers.push_back(Relu{});
    net.layers.push_back(MaxPool2d{2, 2});
    net.layers.push_back(c2);
    net.layers.push_back(Relu{});
    net.layers.push_back(MaxPool2d{2, 2});
    net.conv_base_end = 6;

    std::vector<std::size_t> s = net.input_shape_vec();
    for (std::size_t i = 0; i < net.layers.size(); ++i) s = layer_output_shape(net.layers[i], s);
    const std::size_t flat = Tensor::numel_of(s);

    net.layers.push_back(Flatten{});
    Dense head;
    head.in = flat;
    head.out = static_cast<std::size_t>(num_classes);
    head.weights = he_uniform({flat, head.out}, flat, rng);
    head.bias = Tensor({head.out});
    net.layers.push_back(head);

    net.validate();
    return net;
}

double accuracy(const Classifier& net, const LabeledDataset& data, unsigned threads) {
    if (data.samples.empty()) throw InputError("accuracy: empty dataset");
    std::vector<char> hit(data.samples.size(), 0);
    parallel_for(data.samples.size(), threads, [&](std::size_t i) {
        hit[i] = predict_with_confidence(net, data.samples[i].image).first ==
                 data.samples[i].label;
    });
    std::size_t ok = 0;
    for (char h : hit) ok += static_cast<std::size_t>(h);
    return static_cast<double>(ok) / static_cast<double>(data.samples.size());
}

namespace {

// Training runs on inputs normalized to [0, 1] for conditioning: the first
// linear layer is moved into normalized space up front and folded back out
// at the end. Exact, since conv/dense are linear in the input.
bool scale_first_linear_layer(Classifier& net, double factor) {
    if (auto* c = std::get_if<Conv2d>(&net.layers.front())) {
        for (double& v : c->weights.data) v *= factor;
        return true;
    }
    if (auto* d = std::get_if<Dense>(&net.layers.front())) {
        for (double& v : d->weights.data) v *= factor;
        return true;
    }
    return false;
}

}  // namespace

TrainReport train(Classifier& net, const LabeledDataset& train_set,
                  const LabeledDataset& test_set, const TrainConfig& cfg) {
    if (train_set.samples.empty()) throw InputError("train: empty dataset");
    net.validate();
    for (const auto& s : train_set.samples)
        if (s.label < 0 || s.label >= net.num_classes)
            throw InputError("train: label out of range");

    const double range = Classifier::dynamic_range_hi;
    const bool folded = scale_first_linear_layer(net, range);
    auto normalized = [&](const Tensor& img) {
        if (!folded) return img;
        Tensor x = img;
        x *= 1.0 / range;
        return x;
    };

    Rng rng(cfg.seed);
    auto grads = make_grad_slots(net);
    std::vector<std::size_t> order(train_set.samples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    long long batch_counter = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            zero_grads(grads);
            double batch_loss = 0.0;
            // Single-threaded by contract: accumulation order is sample order.
            for (std::size_t k = start; k < end; ++k) {
                const Sample& s = train_set.samples[order[k]];
                auto acts = forward_record(net, normalized(s.image), net.layers.size());
                double loss = cross_entropy(acts.back(), s.label);
                batch_loss += loss;
                auto probs = softmax(acts.back());
                Tensor dlogits({probs.size()});
                for (std::size_t i = 0; i < probs.size(); ++i) dlogits.data[i] = probs[i];
                dlogits.data[static_cast<std::size_t>(s.label)] -= 1.0;
                backprop(net, acts, std::move(dlogits), &grads);
            }
            ++batch_counter;
            if (!std::isfinite(batch_loss)) {
                if (folded) scale_first_linear_layer(net, 1.0 / range);
                throw TrainingError("train: loss became non-finite", batch_counter);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            loss_sum += batch_loss;
            loss_count += end - start;
            apply_sgd(net, grads, cfg.learning_rate * scale);
        }
        const double mean_loss = loss_sum / static_cast<double>(loss_count);
        double test_acc = 0.0;
        if (!test_set.samples.empty()) {
            std::size_t ok = 0;
            for (const auto& s : test_set.samples) {
                auto probs = softmax(forward(net, normalized(s.image)));
                std::size_t best = 0;
                for (std::size_t i = 1; i < probs.size(); ++i)
                    if (probs[i] > probs[best]) best = i;
                ok += static_cast<int>(best) == s.label;
            }
            test_acc = static_cast<double>(ok) / static_cast<double>(test_set.samples.size());
        }
        report.epoch_log.emplace_back(mean_loss, test_acc);
        report.final_train_loss = mean_loss;
        report.test_accuracy = test_acc;
    }
    if (folded) scale_first_linear_layer(net, 1.0 / range);
    return report;
}

}  // namespace pertfool
