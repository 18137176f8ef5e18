// pertfool - class-targeted universal perturbations against a built-in
// differentiable classifier: training, attacks, refinement, evaluation and
// export, driven by reproducible key = value run configs.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pertfool/analysis.hpp"
#include "pertfool/attack.hpp"
#include "pertfool/datagen.hpp"
#include "pertfool/explain.hpp"
#include "pertfool/io.hpp"
#include "pertfool/refine.hpp"
#include "pertfool/runconfig.hpp"

namespace fs = std::filesystem;
using namespace pertfool;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitTargetNotReached = 1;
constexpr int kExitError = 2;

std::string format_real(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// Declares CLI options mirrored by config-file keys. Flags override file
/// values; the fully resolved set is rendered next to every artifact.
class Params {
public:
    explicit Params(CLI::App* cmd) : cmd_(cmd) {
        cmd_->add_option("--config", config_path_, "key = value run configuration file");
    }

    void add_string(const std::string& key, std::string& var, const std::string& desc) {
        auto* opt = cmd_->add_option("--" + key, var, desc);
        hook(key, opt, [&var](const RunConfig& c, const std::string& k) { var = c.get(k, var); },
             [&var] { return var; });
    }
    void add_int(const std::string& key, long long& var, const std::string& desc) {
        auto* opt = cmd_->add_option("--" + key, var, desc);
        hook(key, opt,
             [&var](const RunConfig& c, const std::string& k) { var = c.get_int(k, var); },
             [&var] { return std::to_string(var); });
    }
    void add_size(const std::string& key, std::size_t& var, const std::string& desc) {
        auto* opt = cmd_->add_option("--" + key, var, desc);
        hook(key, opt,
             [&var](const RunConfig& c, const std::string& k) {
                 long long v = c.get_int(k, static_cast<long long>(var));
                 if (v < 0) throw ConfigError("config key '" + k + "' must be non-negative");
                 var = static_cast<std::size_t>(v);
             },
             [&var] { return std::to_string(var); });
    }
    void add_real(const std::string& key, double& var, const std::string& desc) {
        auto* opt = cmd_->add_option("--" + key, var, desc);
        hook(key, opt,
             [&var](const RunConfig& c, const std::string& k) { var = c.get_real(k, var); },
             [&var] { return format_real(var); });
    }

    /// Loads the config file (if any), rejects unknown keys, applies file
    /// values not overridden on the command line.
    void finalize() {
        if (config_path_.empty()) return;
        RunConfig file = RunConfig::from_file(config_path_);
        file.require_known(known_);
        for (auto& [key, entry] : entries_)
            if (entry.option->count() == 0 && file.has(key)) entry.apply(file, key);
    }

    /// Canonical resolved configuration (sorted keys).
    std::string render() const {
        RunConfig out;
        for (const auto& [key, entry] : entries_) out.set(key, entry.emit());
        return out.render();
    }

    std::map<std::string, std::string> meta(const std::string& command) const {
        std::map<std::string, std::string> m;
        m["command"] = command;
        for (const auto& [key, entry] : entries_) m[key] = entry.emit();
        return m;
    }

private:
    struct Entry {
        CLI::Option* option;
        std::function<void(const RunConfig&, const std::string&)> apply;
        std::function<std::string()> emit;
    };

    void hook(const std::string& key, CLI::Option* opt,
              std::function<void(const RunConfig&, const std::string&)> apply,
              std::function<std::string()> emit) {
        known_.insert(key);
        entries_[key] = {opt, std::move(apply), std::move(emit)};
    }

    CLI::App* cmd_;
    std::string config_path_;
    std::set<std::string> known_;
    std::map<std::string, Entry> entries_;
};

/// Collects artifact paths for one run; anything registered is deleted
/// again unless the run commits, so failures leave no partial outputs.
class ArtifactSet {
public:
    ~ArtifactSet() {
        if (committed_) return;
        for (const auto& p : paths_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
    fs::path track(const fs::path& p) {
        paths_.push_back(p);
        return p;
    }
    void commit() { committed_ = true; }

private:
    std::vector<fs::path> paths_;
    bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    os << text;
}

/// Standard sidecars: <out>.cfg with the resolved parameters and
/// <out>.trace.ndjson with the run trace (empty rows for one-shot commands).
void write_sidecars(ArtifactSet& artifacts, const fs::path& out, const Params& params,
                    const std::string& command, const AttackTrace& trace) {
    write_text(artifacts.track(out.string() + ".cfg"), params.render());
    io::save_trace(artifacts.track(out.string() + ".trace.ndjson"), trace,
                   params.meta(command));
}

LabeledDataset load_split(const std::string& dir, const std::string& split) {
    if (split != "train" && split != "test")
        throw ConfigError("split must be 'train' or 'test'");
    return io::load_dataset_dir(dir, split == "train" ? Split::train : Split::test);
}

std::vector<int> parse_class_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("bad class list entry: '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("class list is empty");
    return out;
}

struct CommonAttackParams {
    std::string model, data, out;
    long long source = 0, target = 0;
    std::string mode = "linf";
    double eta = 15.0;
    double gamma = 0.8;
    std::size_t batch = 128;
    long long min_iters = 0, max_iters = 5000, eval_every = 10;
    double conf_floor = 0.6;
    long long seed = 0;
    std::size_t threads = 1;

    void declare(Params& p, bool two_step) {
        p.add_string("model", model, "classifier checkpoint (.pfnn)");
        p.add_string("data", data, "dataset directory");
        p.add_string("out", out, "output perturbation path (.pfpt)");
        p.add_int("source", source, "source class label");
        p.add_int("target", target, "target class label");
        p.add_string("mode", mode, "norm bound mode: linf|l2|unbounded");
        p.add_real("eta", eta, "norm bound");
        p.add_real("gamma", gamma, "fooling-ratio stopping threshold");
        if (!two_step) p.add_size("batch", batch, "mini-batch size (even)");
        p.add_int("min-iters", min_iters, "minimum iterations before stopping");
        p.add_int("max-iters", max_iters, "iteration cap");
        p.add_int("eval-every", eval_every, "fooling-ratio evaluation cadence");
        p.add_real("conf-floor", conf_floor, "non-source confidence floor");
        p.add_int("seed", seed, "RNG seed");
        p.add_size("threads", threads, "worker threads for batch evaluation");
    }

    FoolConfig to_config() const {
        FoolConfig cfg;
        cfg.target_label = static_cast<int>(target);
        cfg.source_label = static_cast<int>(source);
        cfg.bound = {norm_mode_from_name(mode), eta};
        cfg.batch_size = batch;
        cfg.gamma = gamma;
        cfg.min_iters = min_iters;
        cfg.max_iters = max_iters;
        cfg.eval_every = eval_every;
        cfg.rng_seed = static_cast<std::uint64_t>(seed);
        cfg.nonsource_conf_floor = conf_floor;
        cfg.threads = static_cast<unsigned>(threads);
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"class-targeted universal perturbation toolkit"};
    app.require_subcommand(1);

    int exit_code = kExitOk;

    // ---- gen-data ---------------------------------------------------------
    auto* gen_data = app.add_subcommand("gen-data", "synthesize the digit dataset as IDX files");
    {
        auto params = std::make_shared<Params>(gen_data);
        auto out = std::make_shared<std::string>();
        auto train_per_class = std::make_shared<std::size_t>(400);
        auto test_per_class = std::make_shared<std::size_t>(100);
        auto seed = std::make_shared<long long>(42);
        params->add_string("out", *out, "output directory");
        params->add_size("train-per-class", *train_per_class, "training samples per class");
        params->add_size("test-per-class", *test_per_class, "test samples per class");
        params->add_int("seed", *seed, "RNG seed");
        gen_data->callback([=, &exit_code] {
            params->finalize();
            if (out->empty()) throw ConfigError("gen-data: --out is required");
            fs::create_directories(*out);
            ArtifactSet artifacts;
            DigitDataConfig train_cfg{*train_per_class, static_cast<std::uint64_t>(*seed),
                                      Split::train};
            LabeledDataset train_set = make_digit_dataset(train_cfg);
            DigitDataConfig test_cfg{*test_per_class, static_cast<std::uint64_t>(*seed) + 4200,
                                     Split::test};
            LabeledDataset test_set = make_digit_dataset(test_cfg);
            io::save_idx(artifacts.track(fs::path(*out) / "train-images.idx"),
                         artifacts.track(fs::path(*out) / "train-labels.idx"), train_set);
            io::save_idx(artifacts.track(fs::path(*out) / "test-images.idx"),
                         artifacts.track(fs::path(*out) / "test-labels.idx"), test_set);
            write_sidecars(artifacts, fs::path(*out) / "dataset", *params, "gen-data", {});
            artifacts.commit();
            std::cout << "wrote " << train_set.size() << " train / " << test_set.size()
                      << " test samples to " << *out << "\n";
            exit_code = kExitOk;
        });
    }

    // ---- train --------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train the reference classifier");
    {
        auto params = std::make_shared<Params>(train_cmd);
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto epochs = std::make_shared<std::size_t>(8);
        auto batch = std::make_shared<std::size_t>(32);
        auto lr = std::make_shared<double>(0.05);
        auto seed = std::make_shared<long long>(1);
        auto threads = std::make_shared<std::size_t>(1);
        params->add_string("data", *data, "dataset directory");
        params->add_string("out", *out, "output checkpoint (.pfnn)");
        params->add_size("epochs", *epochs, "training epochs");
        params->add_size("batch", *batch, "mini-batch size");
        params->add_real("lr", *lr, "SGD learning rate");
        params->add_int("seed", *seed, "RNG seed (init + shuffling)");
        params->add_size("threads", *threads, "threads for evaluation");
        train_cmd->callback([=, &exit_code] {
            params->finalize();
            if (data->empty() || out->empty())
                throw ConfigError("train: --data and --out are required");
            LabeledDataset train_set = load_split(*data, "train");
            LabeledDataset test_set = load_split(*data, "test");
            const auto& shape = train_set.samples.front().image.shape;
            int num_classes = 0;
            for (const auto& s : train_set.samples) num_classes = std::max(num_classes, s.label);
            ++num_classes;
            Classifier net = make_reference_classifier(num_classes, shape[0], shape[1], shape[2],
                                                       static_cast<std::uint64_t>(*seed));
            TrainConfig cfg{*epochs, *batch, *lr, static_cast<std::uint64_t>(*seed)};
            TrainReport rep = train(net, train_set, test_set, cfg);

            ArtifactSet artifacts;
            io::save_classifier(artifacts.track(*out), net);
            AttackTrace trace;  // per-epoch log: t = epoch, ratio = test accuracy
            for (std::size_t e = 0; e < rep.epoch_log.size(); ++e)
                trace.rows.push_back({static_cast<long long>(e + 1), rep.epoch_log[e].second,
                                      rep.epoch_log[e].second, rep.epoch_log[e].first, 0.0, {}});
            trace.final_iter = static_cast<long long>(rep.epoch_log.size());
            trace.final_ratio = rep.test_accuracy;
            trace.target_reached = true;
            write_sidecars(artifacts, *out, *params, "train", trace);
            artifacts.commit();
            std::cout << "test accuracy " << rep.test_accuracy << "\n";
            exit_code = kExitOk;
        });
    }

    // ---- fool ----------------------------------------------------------------
    auto* fool_cmd = app.add_subcommand("fool", "single-stage targeted universal attack");
    {
        auto params = std::make_shared<Params>(fool_cmd);
        auto common = std::make_shared<CommonAttackParams>();
        common->declare(*params, false);
        fool_cmd->callback([=, &exit_code] {
            params->finalize();
            if (common->model.empty() || common->data.empty() || common->out.empty())
                throw ConfigError("fool: --model, --data and --out are required");
            Classifier net = io::load_classifier(common->model);
            LabeledDataset train_set = load_split(common->data, "train");
            auto S = images_of_class(train_set, static_cast<int>(common->source));
            if (S.empty()) throw InputError("no source-class samples in the training split");
            LabeledDataset others = train_set.exclude_label(static_cast<int>(common->source));
            FoolConfig cfg = common->to_config();
            LabeledDataset filtered =
                filter_nonsource(net, others, cfg.nonsource_conf_floor, cfg.threads);
            AttackResult result = run_fool_attack(net, S, filtered, cfg);

            ArtifactSet artifacts;
            io::save_perturbation(artifacts.track(common->out), result.perturbation);
            write_sidecars(artifacts, common->out, *params, "fool", result.trace);
            artifacts.commit();
            std::cout << "fooling ratio " << result.trace.final_ratio << " after "
                      << result.trace.final_iter << " iterations\n";
            exit_code = result.trace.target_reached ? kExitOk : kExitTargetNotReached;
        });
    }

    // ---- fool2step --------------------------------------------------------------
    auto* two_cmd = app.add_subcommand("fool2step", "two-step warm-started attack");
    {
        auto params = std::make_shared<Params>(two_cmd);
        auto common = std::make_shared<CommonAttackParams>();
        auto step1_iters = std::make_shared<long long>(100);
        auto step1_batch = std::make_shared<std::size_t>(64);
        auto step2_batch = std::make_shared<std::size_t>(128);
        common->min_iters = 100;
        common->declare(*params, true);
        params->add_int("step1-iters", *step1_iters, "warm-start iterations");
        params->add_size("step1-batch", *step1_batch, "warm-start mini-batch size");
        params->add_size("step2-batch", *step2_batch, "full-attack mini-batch size");
        two_cmd->callback([=, &exit_code] {
            params->finalize();
            if (common->model.empty() || common->data.empty() || common->out.empty())
                throw ConfigError("fool2step: --model, --data and --out are required");
            Classifier net = io::load_classifier(common->model);
            LabeledDataset train_set = load_split(common->data, "train");
            auto S = images_of_class(train_set, static_cast<int>(common->source));
            if (S.empty()) throw InputError("no source-class samples in the training split");
            LabeledDataset others = train_set.exclude_label(static_cast<int>(common->source));
            TwoStepConfig cfg;
            cfg.base = common->to_config();
            cfg.base.batch_size = *step2_batch;
            cfg.step1_iters = *step1_iters;
            cfg.step1_batch = *step1_batch;
            cfg.step2_batch = *step2_batch;
            cfg.step2_gamma = common->gamma;
            cfg.step2_min_iters = common->min_iters;
            LabeledDataset filtered =
                filter_nonsource(net, others, cfg.base.nonsource_conf_floor, cfg.base.threads);
            TwoStepResult result = two_step_attack(net, S, filtered, cfg);

            ArtifactSet artifacts;
            io::save_perturbation(artifacts.track(common->out), result.perturbation);
            write_text(artifacts.track(common->out + ".cfg"), params->render());
            io::save_trace(artifacts.track(common->out + ".step1.trace.ndjson"),
                           result.step1_trace, params->meta("fool2step/step1"));
            io::save_trace(artifacts.track(common->out + ".trace.ndjson"), result.step2_trace,
                           params->meta("fool2step"));
            artifacts.commit();
            std::cout << "fooling ratio " << result.step2_trace.final_ratio << " after "
                      << result.step2_trace.final_iter << " iterations (warm start "
                      << result.step1_trace.final_ratio << ")\n";
            exit_code = result.step2_trace.target_reached ? kExitOk : kExitTargetNotReached;
        });
    }

    // ---- explain ------------------------------------------------------------
    auto* explain_cmd = app.add_subcommand("explain", "seed-anchored explanation perturbation");
    {
        auto params = std::make_shared<Params>(explain_cmd);
        auto model = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto gaussian = std::make_shared<std::string>();
        auto target = std::make_shared<long long>(0);
        auto eta = std::make_shared<double>(10.0);
        auto gamma = std::make_shared<double>(0.8);
        auto alpha = std::make_shared<double>(0.5);
        auto batch = std::make_shared<std::size_t>(32);
        auto pool_size = std::make_shared<std::size_t>(255);
        auto refine_every = std::make_shared<long long>(50);
        auto refine_until = std::make_shared<long long>(300);
        auto max_iters = std::make_shared<long long>(5000);
        auto seed = std::make_shared<long long>(0);
        auto threads = std::make_shared<std::size_t>(1);
        params->add_string("model", *model, "classifier checkpoint (.pfnn)");
        params->add_string("data", *data, "dataset directory (pool source)");
        params->add_string("gaussian", *gaussian, "PFGS sampler; replaces the dataset pool");
        params->add_string("out", *out, "output perturbation (.pfpt)");
        params->add_int("target", *target, "target class label");
        params->add_real("eta", *eta, "linf bound");
        params->add_real("gamma", *gamma, "stopping fraction over pool + seed");
        params->add_real("alpha", *alpha, "seed gradient weight");
        params->add_size("batch", *batch, "mini-batch size");
        params->add_size("pool-size", *pool_size, "pool samples (seed excluded)");
        params->add_int("refine-every", *refine_every, "phase C refinement cadence");
        params->add_int("refine-until", *refine_until, "phase C iteration count");
        params->add_int("max-iters", *max_iters, "phase A iteration cap");
        params->add_int("seed", *seed, "RNG seed");
        params->add_size("threads", *threads, "worker threads");
        explain_cmd->callback([=, &exit_code] {
            params->finalize();
            if (model->empty() || out->empty())
                throw ConfigError("explain: --model and --out are required");
            if (data->empty() == gaussian->empty())
                throw ConfigError("explain: exactly one of --data or --gaussian is required");
            Classifier net = io::load_classifier(*model);

            Rng rng(static_cast<std::uint64_t>(*seed));
            ExplainConfig cfg;
            cfg.target_label = static_cast<int>(*target);
            cfg.seed_weight = *alpha;
            cfg.gamma = *gamma;
            cfg.bound = {NormMode::linf, *eta};
            cfg.batch_size = *batch;
            cfg.pool_size = *pool_size;
            cfg.refine_every = *refine_every;
            cfg.refine_until = *refine_until;
            cfg.max_iters = *max_iters;
            cfg.rng_seed = static_cast<std::uint64_t>(*seed) + 1;
            cfg.threads = static_cast<unsigned>(*threads);

            std::vector<Tensor> pool;
            if (!gaussian->empty()) {
                GaussianSampler sampler = io::load_gaussian_sampler(*gaussian);
                cfg.seed = latent_to_input(sampler, sample_latent(sampler, rng));
                for (std::size_t i = 0; i < cfg.pool_size; ++i)
                    pool.push_back(latent_to_input(sampler, sample_latent(sampler, rng)));
            } else {
                LabeledDataset train_set = load_split(*data, "train");
                auto [images, indices] =
                    build_explain_pool(train_set, cfg.target_label, cfg.pool_size + 1, rng);
                cfg.seed = images.front();
                pool.assign(images.begin() + 1, images.end());
            }

            ExplainResult result = run_explain(net, pool, cfg);
            ArtifactSet artifacts;
            io::save_perturbation(artifacts.track(*out), result.perturbation);
            write_sidecars(artifacts, *out, *params, "explain", result.trace);
            artifacts.commit();
            std::cout << "pool fooled fraction " << result.trace.final_ratio << " after "
                      << result.trace.final_iter << " iterations\n";
            exit_code = result.trace.target_reached ? kExitOk : kExitTargetNotReached;
        });
    }

    // ---- refine ---------------------------------------------------------------
    auto* refine_cmd = app.add_subcommand("refine", "activation-guided perturbation refinement");
    {
        auto params = std::make_shared<Params>(refine_cmd);
        auto model = std::make_shared<std::string>();
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto mask_out = std::make_shared<std::string>();
        auto avg_out = std::make_shared<std::string>();
        auto lambda = std::make_shared<double>(5.0);
        params->add_string("model", *model, "classifier checkpoint (.pfnn)");
        params->add_string("in", *in, "input perturbation (.pfpt)");
        params->add_string("out", *out, "output perturbation (.pfpt)");
        params->add_string("mask-out", *mask_out, "optional PGM export of the saliency mask");
        params->add_string("avg-out", *avg_out,
                           "optional PGM export of the averaged base signal (min-max scaled)");
        params->add_real("lambda", *lambda, "mask scale");
        refine_cmd->callback([=, &exit_code] {
            params->finalize();
            if (model->empty() || in->empty() || out->empty())
                throw ConfigError("refine: --model, --in and --out are required");
            Classifier net = io::load_classifier(*model);
            Perturbation pert = io::load_perturbation(*in);
            RefineResult r = refine_perturbation(net, pert.p, *lambda);
            ArtifactSet artifacts;
            Perturbation refined;
            refined.p = r.p;
            refined.bound = {NormMode::unbounded, 0.0};
            io::save_perturbation(artifacts.track(*out), refined);
            if (!mask_out->empty()) {
                Tensor mask2d({r.mask.shape[0], r.mask.shape[1], 1}, r.mask.data);
                for (double& v : mask2d.data) v = std::clamp(v * 51.0, 0.0, 255.0);
                io::save_image(artifacts.track(*mask_out), mask2d);
            }
            if (!avg_out->empty()) {
                Tensor a({r.activation_mean.shape[0], r.activation_mean.shape[1], 1},
                         r.activation_mean.data);
                double lo = a.data[0], hi = a.data[0];
                for (double v : a.data) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                const double span = hi > lo ? hi - lo : 1.0;
                for (double& v : a.data) v = io::round_half_away(255.0 * (v - lo) / span);
                io::save_image(artifacts.track(*avg_out), a);
            }
            AttackTrace trace;
            trace.events.push_back({0, r.degenerate ? "refine-degenerate" : "refine"});
            trace.target_reached = !r.degenerate;
            write_sidecars(artifacts, *out, *params, "refine", trace);
            artifacts.commit();
            if (r.degenerate)
                std::cerr << "warning: degenerate threshold, perturbation zeroed\n";
            std::cout << "threshold " << r.threshold << "\n";
            exit_code = kExitOk;
        });
    }

    // ---- eval --------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "fooling report on held-out data");
    {
        auto params = std::make_shared<Params>(eval_cmd);
        auto model = std::make_shared<std::string>();
        auto pert_path = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>("test");
        auto source = std::make_shared<long long>(0);
        auto target = std::make_shared<long long>(0);
        auto threads = std::make_shared<std::size_t>(1);
        params->add_string("model", *model, "classifier checkpoint (.pfnn)");
        params->add_string("pert", *pert_path, "perturbation (.pfpt)");
        params->add_string("data", *data, "dataset directory");
        params->add_string("out", *out, "report output (.json); stdout only when omitted");
        params->add_string("split", *split, "dataset split: train|test");
        params->add_int("source", *source, "source class label");
        params->add_int("target", *target, "target class label");
        params->add_size("threads", *threads, "worker threads");
        eval_cmd->callback([=, &exit_code] {
            params->finalize();
            if (model->empty() || pert_path->empty() || data->empty())
                throw ConfigError("eval: --model, --pert and --data are required");
            Classifier net = io::load_classifier(*model);
            Perturbation pert = io::load_perturbation(*pert_path);
            LabeledDataset eval_set = load_split(*data, *split);
            FoolingReport rep = report(net, pert, eval_set, static_cast<int>(*source),
                                       static_cast<int>(*target),
                                       static_cast<unsigned>(*threads));
            std::cout << io::report_to_json(rep);
            if (!out->empty()) {
                ArtifactSet artifacts;
                io::save_report(artifacts.track(*out), rep);
                write_sidecars(artifacts, *out, *params, "eval", {});
                artifacts.commit();
            }
            exit_code = kExitOk;
        });
    }

    // ---- hops ---------------------------------------------------------------
    auto* hops_cmd = app.add_subcommand("hops", "max-label hopping table from a trace");
    {
        auto params = std::make_shared<Params>(hops_cmd);
        auto trace_path = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto source = std::make_shared<long long>(-1);
        params->add_string("trace", *trace_path, "attack trace (.ndjson)");
        params->add_string("out", *out, "hop table output (.csv)");
        params->add_int("source", *source, "source label; default: from the trace metadata");
        hops_cmd->callback([=, &exit_code] {
            params->finalize();
            if (trace_path->empty() || out->empty())
                throw ConfigError("hops: --trace and --out are required");
            std::map<std::string, std::string> meta;
            AttackTrace trace = io::load_trace(*trace_path, &meta);
            long long src = *source;
            if (src < 0) {
                auto it = meta.find("source");
                if (it == meta.end())
                    throw ConfigError("hops: trace has no source label, pass --source");
                src = std::stoll(it->second);
            }
            HopTrace hops = hop_trace(trace, static_cast<int>(src));
            ArtifactSet artifacts;
            io::save_hops_csv(artifacts.track(*out), hops);
            write_sidecars(artifacts, *out, *params, "hops", {});
            artifacts.commit();
            exit_code = kExitOk;
        });
    }

    // ---- distances -------------------------------------------------------------
    auto* dist_cmd =
        app.add_subcommand("distances", "unbounded-attack l2 distance table over class pairs");
    {
        auto params = std::make_shared<Params>(dist_cmd);
        auto model = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto classes = std::make_shared<std::string>();
        auto repeats = std::make_shared<std::size_t>(3);
        auto fool_target = std::make_shared<double>(0.95);
        auto per_class = std::make_shared<std::size_t>(0);
        auto batch = std::make_shared<std::size_t>(32);
        auto max_iters = std::make_shared<long long>(3000);
        auto eval_every = std::make_shared<long long>(10);
        auto conf_floor = std::make_shared<double>(0.6);
        auto seed = std::make_shared<long long>(0);
        auto threads = std::make_shared<std::size_t>(1);
        params->add_string("model", *model, "classifier checkpoint (.pfnn)");
        params->add_string("data", *data, "dataset directory");
        params->add_string("out", *out, "distance table output (.csv)");
        params->add_string("classes", *classes, "comma-separated class labels");
        params->add_size("repeats", *repeats, "repeats per ordered pair");
        params->add_real("fool-target", *fool_target, "training fooling rate to reach");
        params->add_size("per-class", *per_class, "source samples per class (0: all)");
        params->add_size("batch", *batch, "mini-batch size");
        params->add_int("max-iters", *max_iters, "iteration cap per attack");
        params->add_int("eval-every", *eval_every, "evaluation cadence");
        params->add_real("conf-floor", *conf_floor, "non-source confidence floor");
        params->add_int("seed", *seed, "RNG seed");
        params->add_size("threads", *threads, "worker threads");
        dist_cmd->callback([=, &exit_code] {
            params->finalize();
            if (model->empty() || data->empty() || out->empty() || classes->empty())
                throw ConfigError("distances: --model, --data, --classes, --out are required");
            Classifier net = io::load_classifier(*model);
            LabeledDataset train_set = load_split(*data, "train");
            DistanceTableConfig cfg;
            cfg.class_list = parse_class_list(*classes);
            cfg.repeats = *repeats;
            cfg.fool_target = *fool_target;
            cfg.per_class = *per_class;
            cfg.batch_size = *batch;
            cfg.max_iters = *max_iters;
            cfg.eval_every = *eval_every;
            cfg.nonsource_conf_floor = *conf_floor;
            cfg.rng_seed = static_cast<std::uint64_t>(*seed);
            cfg.threads = static_cast<unsigned>(*threads);
            DistanceTable table = distance_table(net, train_set, cfg);

            ArtifactSet artifacts;
            io::save_distance_csv(artifacts.track(*out), table);
            write_sidecars(artifacts, *out, *params, "distances", {});
            artifacts.commit();
            std::cout << "asymmetry " << distance_asymmetry(table) << " pooled-std "
                      << pooled_std(table) << "\n";
            bool all_converged = true;
            for (const auto& cell : table)
                if (cell.norms.size() != cell.attempted) all_converged = false;
            exit_code = all_converged ? kExitOk : kExitTargetNotReached;
        });
    }

    // ---- gen-gaussian -------------------------------------------------------
    auto* gauss_cmd = app.add_subcommand(
        "gen-gaussian", "fit the downsampled Gaussian sampler of a target class");
    {
        auto params = std::make_shared<Params>(gauss_cmd);
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>("train");
        auto cls = std::make_shared<long long>(0);
        auto down = std::make_shared<std::size_t>(4);
        auto jitter = std::make_shared<double>(1e-6);
        params->add_string("data", *data, "dataset directory");
        params->add_string("out", *out, "sampler output (.pfgs)");
        params->add_string("split", *split, "dataset split: train|test");
        params->add_int("class", *cls, "target class label");
        params->add_size("down-factor", *down, "downsampling factor");
        params->add_real("jitter", *jitter, "diagonal jitter");
        gauss_cmd->callback([=, &exit_code] {
            params->finalize();
            if (data->empty() || out->empty())
                throw ConfigError("gen-gaussian: --data and --out are required");
            LabeledDataset set = load_split(*data, *split);
            auto images = images_of_class(set, static_cast<int>(*cls));
            GaussianSampler sampler = build_gaussian_sampler(images, *down, *jitter);
            ArtifactSet artifacts;
            io::save_gaussian_sampler(artifacts.track(*out), sampler);
            write_sidecars(artifacts, *out, *params, "gen-gaussian", {});
            artifacts.commit();
            std::cout << "sampler over " << images.size() << " images, dim " << sampler.dim()
                      << "\n";
            exit_code = kExitOk;
        });
    }

    // ---- viz -------------------------------------------------------------------
    auto* viz_cmd = app.add_subcommand("viz", "export a perturbation visualization image");
    {
        auto params = std::make_shared<Params>(viz_cmd);
        auto in = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        params->add_string("in", *in, "perturbation (.pfpt)");
        params->add_string("out", *out, "image output (.pgm for 1 channel, .ppm for 3)");
        viz_cmd->callback([=, &exit_code] {
            params->finalize();
            if (in->empty() || out->empty())
                throw ConfigError("viz: --in and --out are required");
            Perturbation pert = io::load_perturbation(*in);
            ArtifactSet artifacts;
            io::save_image(artifacts.track(*out), io::visualization_image(pert.p));
            write_sidecars(artifacts, *out, *params, "viz", {});
            artifacts.commit();
            exit_code = kExitOk;
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int cli_code = app.exit(e);
        return cli_code == 0 ? kExitOk : kExitError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return exit_code;
}
