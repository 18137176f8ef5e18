// Python bindings for the perturbation toolkit: tensors cross the boundary
// as numpy float64 arrays, datasets as (images, labels) pairs.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pertfool/analysis.hpp"
#include "pertfool/attack.hpp"
#include "pertfool/datagen.hpp"
#include "pertfool/explain.hpp"
#include "pertfool/io.hpp"
#include "pertfool/refine.hpp"

namespace py = pybind11;
using namespace pertfool;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

std::vector<Tensor> batch_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() < 2) throw InputError("expected a batch array [N, ...]");
    const auto n = static_cast<std::size_t>(a.shape(0));
    std::vector<std::size_t> shape(a.ndim() - 1);
    std::size_t stride = 1;
    for (py::ssize_t i = 1; i < a.ndim(); ++i) {
        shape[i - 1] = static_cast<std::size_t>(a.shape(i));
        stride *= shape[i - 1];
    }
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t(shape);
        std::copy(a.data() + i * stride, a.data() + (i + 1) * stride, t.data.begin());
        out.push_back(std::move(t));
    }
    return out;
}

LabeledDataset dataset_from_arrays(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& images,
    const std::vector<int>& labels, Split split) {
    auto batch = batch_from_array(images);
    if (batch.size() != labels.size()) throw InputError("images/labels length mismatch");
    LabeledDataset data;
    data.split = split;
    for (std::size_t i = 0; i < batch.size(); ++i)
        data.samples.push_back({std::move(batch[i]), labels[i]});
    return data;
}

py::list trace_to_list(const AttackTrace& trace) {
    py::list rows;
    for (const auto& r : trace.rows) {
        py::dict d;
        d["t"] = r.t;
        d["ratio"] = r.ratio;
        d["best_ratio"] = r.best_ratio;
        d["linf"] = r.linf;
        d["l2"] = r.l2;
        d["hist"] = r.histogram;
        rows.append(d);
    }
    return rows;
}

py::dict trace_to_dict(const AttackTrace& trace) {
    py::dict d;
    d["rows"] = trace_to_list(trace);
    py::list events;
    for (const auto& e : trace.events) {
        py::dict ev;
        ev["t"] = e.t;
        ev["event"] = e.event;
        events.append(ev);
    }
    d["events"] = events;
    d["target_reached"] = trace.target_reached;
    d["final_iter"] = trace.final_iter;
    d["final_ratio"] = trace.final_ratio;
    return d;
}

NormBound bound_from_args(const std::string& mode, double eta) {
    return {norm_mode_from_name(mode), eta};
}

}  // namespace

PYBIND11_MODULE(pertfool, m) {
    m.doc() = "class-targeted universal adversarial perturbations, desk scale";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<Perturbation>(m, "Perturbation")
        .def_property_readonly("data", [](const Perturbation& p) { return array_from_tensor(p.p); })
        .def_property_readonly("mode",
                               [](const Perturbation& p) { return norm_mode_name(p.bound.mode); })
        .def_property_readonly("eta", [](const Perturbation& p) { return p.bound.eta; })
        .def("save", [](const Perturbation& p, const std::string& path) {
            io::save_perturbation(path, p);
        })
        .def_static("load",
                    [](const std::string& path) { return io::load_perturbation(path); })
        .def_static("from_array",
                    [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                       const std::string& mode, double eta) {
                        return Perturbation{tensor_from_array(a), bound_from_args(mode, eta)};
                    },
                    py::arg("data"), py::arg("mode") = "unbounded", py::arg("eta") = 0.0);

    py::class_<Classifier>(m, "Classifier")
        .def_static("reference",
                    [](int num_classes, std::size_t h, std::size_t w, std::size_t c,
                       std::uint64_t seed) {
                        return make_reference_classifier(num_classes, h, w, c, seed);
                    },
                    py::arg("num_classes"), py::arg("h"), py::arg("w"), py::arg("c"),
                    py::arg("seed"))
        .def_static("load", [](const std::string& path) { return io::load_classifier(path); })
        .def("save",
             [](const Classifier& net, const std::string& path) { io::save_classifier(path, net); })
        .def_property_readonly("num_classes", [](const Classifier& n) { return n.num_classes; })
        .def_property_readonly("input_shape",
                               [](const Classifier& n) { return n.input_shape_vec(); })
        .def("forward",
             [](const Classifier& net, const py::array_t<double>& x) {
                 return array_from_tensor(forward(net, tensor_from_array(x)));
             })
        .def("predict",
             [](const Classifier& net, const py::array_t<double>& x) {
                 return predict_with_confidence(net, tensor_from_array(x));
             })
        .def("input_gradient",
             [](const Classifier& net, const py::array_t<double>& x, int label) {
                 return array_from_tensor(input_gradient(net, tensor_from_array(x), label));
             })
        .def("conv_base_activations",
             [](const Classifier& net, const py::array_t<double>& x) {
                 return array_from_tensor(conv_base_activations(net, tensor_from_array(x)));
             })
        .def("accuracy",
             [](const Classifier& net, const py::array_t<double>& images,
                const std::vector<int>& labels, unsigned threads) {
                 return accuracy(net, dataset_from_arrays(images, labels, Split::test), threads);
             },
             py::arg("images"), py::arg("labels"), py::arg("threads") = 1);

    m.def(
        "train",
        [](Classifier& net, const py::array_t<double>& images, const std::vector<int>& labels,
           const py::array_t<double>& test_images, const std::vector<int>& test_labels,
           std::size_t epochs, std::size_t batch, double lr, std::uint64_t seed) {
            TrainConfig cfg{epochs, batch, lr, seed};
            TrainReport rep =
                train(net, dataset_from_arrays(images, labels, Split::train),
                      dataset_from_arrays(test_images, test_labels, Split::test), cfg);
            py::dict d;
            d["test_accuracy"] = rep.test_accuracy;
            d["final_train_loss"] = rep.final_train_loss;
            return d;
        },
        py::arg("classifier"), py::arg("images"), py::arg("labels"), py::arg("test_images"),
        py::arg("test_labels"), py::arg("epochs") = 8, py::arg("batch") = 32,
        py::arg("lr") = 0.05, py::arg("seed") = 1);

    m.def(
        "gen_digits",
        [](std::size_t per_class, std::uint64_t seed, const std::string& split) {
            DigitDataConfig cfg{per_class, seed,
                                split == "test" ? Split::test : Split::train};
            LabeledDataset data = make_digit_dataset(cfg);
            std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(data.size()), 28, 28, 1};
            py::array_t<double> images(shape);
            std::vector<int> labels(data.size());
            double* out = images.mutable_data();
            for (std::size_t i = 0; i < data.size(); ++i) {
                const auto& img = data.samples[i].image;
                std::copy(img.data.begin(), img.data.end(), out + i * img.numel());
                labels[i] = data.samples[i].label;
            }
            return py::make_tuple(images, labels);
        },
        py::arg("per_class"), py::arg("seed") = 42, py::arg("split") = "train");

    m.def(
        "filter_nonsource",
        [](const Classifier& net, const py::array_t<double>& images,
           const std::vector<int>& labels, double conf_floor, unsigned threads) {
            LabeledDataset kept = filter_nonsource(
                net, dataset_from_arrays(images, labels, Split::train), conf_floor, threads);
            py::list out_images;
            std::vector<int> out_labels;
            for (const auto& s : kept.samples) {
                out_images.append(array_from_tensor(s.image));
                out_labels.push_back(s.label);
            }
            return py::make_tuple(out_images, out_labels);
        },
        py::arg("classifier"), py::arg("images"), py::arg("labels"),
        py::arg("conf_floor") = 0.6, py::arg("threads") = 1);

    m.def(
        "fool",
        [](const Classifier& net, const py::array_t<double>& source_images,
           const py::array_t<double>& nonsource_images, const std::vector<int>& nonsource_labels,
           int target, int source, const std::string& mode, double eta, double gamma,
           std::size_t batch, long long min_iters, long long max_iters, long long eval_every,
           std::uint64_t seed, unsigned threads, bool step1_mode) {
            FoolConfig cfg;
            cfg.target_label = target;
            cfg.source_label = source;
            cfg.bound = bound_from_args(mode, eta);
            cfg.batch_size = batch;
            cfg.gamma = gamma;
            cfg.min_iters = min_iters;
            cfg.max_iters = max_iters;
            cfg.eval_every = eval_every;
            cfg.rng_seed = seed;
            cfg.threads = threads;
            auto result = run_fool_attack(
                net, batch_from_array(source_images),
                dataset_from_arrays(nonsource_images, nonsource_labels, Split::train), cfg,
                step1_mode);
            return py::make_tuple(result.perturbation, trace_to_dict(result.trace));
        },
        py::arg("classifier"), py::arg("source_images"), py::arg("nonsource_images"),
        py::arg("nonsource_labels"), py::arg("target"), py::arg("source"),
        py::arg("mode") = "linf", py::arg("eta") = 15.0, py::arg("gamma") = 0.8,
        py::arg("batch") = 128, py::arg("min_iters") = 0, py::arg("max_iters") = 5000,
        py::arg("eval_every") = 10, py::arg("seed") = 0, py::arg("threads") = 1,
        py::arg("step1_mode") = false);

    m.def(
        "two_step",
        [](const Classifier& net, const py::array_t<double>& source_images,
           const py::array_t<double>& nonsource_images, const std::vector<int>& nonsource_labels,
           int target, int source, const std::string& mode, double eta, double gamma,
           long long step1_iters, std::size_t step1_batch, std::size_t step2_batch,
           long long min_iters, long long max_iters, long long eval_every, std::uint64_t seed,
           unsigned threads) {
            TwoStepConfig cfg;
            cfg.base.target_label = target;
            cfg.base.source_label = source;
            cfg.base.bound = bound_from_args(mode, eta);
            cfg.base.max_iters = max_iters;
            cfg.base.eval_every = eval_every;
            cfg.base.rng_seed = seed;
            cfg.base.threads = threads;
            cfg.step1_iters = step1_iters;
            cfg.step1_batch = step1_batch;
            cfg.step2_batch = step2_batch;
            cfg.step2_gamma = gamma;
            cfg.step2_min_iters = min_iters;
            auto result = two_step_attack(
                net, batch_from_array(source_images),
                dataset_from_arrays(nonsource_images, nonsource_labels, Split::train), cfg);
            return py::make_tuple(result.perturbation, trace_to_dict(result.step1_trace),
                                  trace_to_dict(result.step2_trace));
        },
        py::arg("classifier"), py::arg("source_images"), py::arg("nonsource_images"),
        py::arg("nonsource_labels"), py::arg("target"), py::arg("source"),
        py::arg("mode") = "linf", py::arg("eta") = 15.0, py::arg("gamma") = 0.8,
        py::arg("step1_iters") = 100, py::arg("step1_batch") = 64, py::arg("step2_batch") = 128,
        py::arg("min_iters") = 100, py::arg("max_iters") = 5000, py::arg("eval_every") = 10,
        py::arg("seed") = 0, py::arg("threads") = 1);

    m.def(
        "explain",
        [](const Classifier& net, const py::array_t<double>& pool_images,
           const py::array_t<double>& seed_image, int target, double alpha, double gamma,
           double eta, std::size_t batch, long long refine_every, long long refine_until,
           long long max_iters, std::uint64_t seed, unsigned threads) {
            ExplainConfig cfg;
            cfg.target_label = target;
            cfg.seed = tensor_from_array(seed_image);
            cfg.seed_weight = alpha;
            cfg.gamma = gamma;
            cfg.bound = {NormMode::linf, eta};
            cfg.batch_size = batch;
            auto pool = batch_from_array(pool_images);
            cfg.pool_size = pool.size();
            cfg.refine_every = refine_every;
            cfg.refine_until = refine_until;
            cfg.max_iters = max_iters;
            cfg.rng_seed = seed;
            cfg.threads = threads;
            auto result = run_explain(net, pool, cfg);
            return py::make_tuple(result.perturbation, trace_to_dict(result.trace));
        },
        py::arg("classifier"), py::arg("pool_images"), py::arg("seed_image"), py::arg("target"),
        py::arg("alpha") = 0.5, py::arg("gamma") = 0.8, py::arg("eta") = 10.0,
        py::arg("batch") = 32, py::arg("refine_every") = 50, py::arg("refine_until") = 300,
        py::arg("max_iters") = 5000, py::arg("seed") = 0, py::arg("threads") = 1);

    m.def(
        "refine",
        [](const Classifier& net, const py::array_t<double>& p, double lambda) {
            RefineResult r = refine_perturbation(net, tensor_from_array(p), lambda);
            py::dict d;
            d["p"] = array_from_tensor(r.p);
            d["mask"] = array_from_tensor(r.mask);
            d["threshold"] = r.threshold;
            d["degenerate"] = r.degenerate;
            return d;
        },
        py::arg("classifier"), py::arg("p"), py::arg("lambda_") = 5.0);

    m.def(
        "fooling_ratio",
        [](const Classifier& net, const py::array_t<double>& p,
           const py::array_t<double>& source_images, int target, unsigned threads) {
            return fooling_ratio(net, tensor_from_array(p), batch_from_array(source_images),
                                 target, threads);
        },
        py::arg("classifier"), py::arg("p"), py::arg("source_images"), py::arg("target"),
        py::arg("threads") = 1);

    m.def(
        "report",
        [](const Classifier& net, const Perturbation& pert, const py::array_t<double>& images,
           const std::vector<int>& labels, int source, int target, unsigned threads) {
            FoolingReport rep = report(net, pert, dataset_from_arrays(images, labels, Split::test),
                                       source, target, threads);
            py::dict d;
            d["fooling_ratio"] = rep.fooling_ratio;
            d["leakage"] = rep.leakage;
            d["per_class_target_rate"] = rep.per_class_target_rate;
            d["n_source"] = rep.n_source;
            d["n_nonsource"] = rep.n_nonsource;
            d["linf"] = rep.linf;
            d["l2"] = rep.l2;
            return d;
        },
        py::arg("classifier"), py::arg("perturbation"), py::arg("images"), py::arg("labels"),
        py::arg("source"), py::arg("target"), py::arg("threads") = 1);

    m.def(
        "gaussian_inputs",
        [](const py::array_t<double>& target_class_images, std::size_t count, std::uint64_t seed,
           std::size_t down_factor, double jitter) {
            Rng rng(seed);
            GaussianInputs inputs = gaussian_inputs(batch_from_array(target_class_images), count,
                                                    rng, down_factor, jitter);
            py::list pool;
            for (const auto& t : inputs.pool) pool.append(array_from_tensor(t));
            return py::make_tuple(array_from_tensor(inputs.seed), pool);
        },
        py::arg("target_class_images"), py::arg("count") = 256, py::arg("seed") = 0,
        py::arg("down_factor") = 4, py::arg("jitter") = 1e-6);

    m.def("visualization_image", [](const py::array_t<double>& p) {
        return array_from_tensor(io::visualization_image(tensor_from_array(p)));
    });

    m.def("adversarial_image",
          [](const py::array_t<double>& sample, const py::array_t<double>& p) {
              return array_from_tensor(
                  io::adversarial_image(tensor_from_array(sample), tensor_from_array(p)));
          });
}
