#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "pertfool/analysis.hpp"

using namespace pertfool;
using namespace testutil;

namespace {

// A classifier whose prediction is fully determined by pixel 0:
// label 1 ("target") iff the pixel exceeds 100.
Classifier threshold_net() {
    Classifier net;
    net.num_classes = 2;
    net.input_shape = {1, 1, 1};
    net.conv_base_end = 1;
    Tensor stem({1, 1, 1, 1});
    stem.data = {1.0};
    net.layers.push_back(Conv2d{1, 1, 1, 1, 1, 0, stem, Tensor({1})});
    net.layers.push_back(Flatten{});
    Tensor w({1, 2});
    w.data = {-1.0, 1.0};
    Tensor b({2});
    b.data = {100.0, -100.0};
    net.layers.push_back(Dense{1, 2, w, b});
    net.validate();
    return net;
}

Tensor pixel(double v) {
    Tensor t({1, 1, 1});
    t.data = {v};
    return t;
}

}  // namespace

TEST_CASE("leakage") {
    Classifier net = threshold_net();
    Tensor p({1, 1, 1});  // zero perturbation

    SUBCASE("zero perturbation and no target predictions give zero") {
        std::map<int, std::vector<Tensor>> sets;
        sets[0] = {pixel(10), pixel(20), pixel(30)};
        CHECK(leakage(net, p, sets, 1) == 0.0);
    }
    SUBCASE("mean of per-class rates") {
        std::map<int, std::vector<Tensor>> sets;
        // class A: 1 of 5 above threshold; class B: 2 of 5
        sets[0] = {pixel(10), pixel(20), pixel(30), pixel(40), pixel(150)};
        sets[2] = {pixel(10), pixel(20), pixel(30), pixel(150), pixel(200)};
        CHECK(leakage(net, p, sets, 1) == doctest::Approx(0.3));
        auto rates = per_class_target_rates(net, p, sets, 1);
        CHECK(rates[0] == doctest::Approx(0.2));
        CHECK(rates[2] == doctest::Approx(0.4));
        // exact recount equality: leakage is the arithmetic mean of rates
        double mean = (rates[0] + rates[2]) / 2.0;
        CHECK(leakage(net, p, sets, 1) == mean);
    }
    SUBCASE("empty class set is an input error") {
        std::map<int, std::vector<Tensor>> sets;
        CHECK_THROWS_AS(leakage(net, p, sets, 1), InputError);
        sets[0] = {};
        CHECK_THROWS_AS(leakage(net, p, sets, 1), InputError);
    }
}

TEST_CASE("hop_trace") {
    SUBCASE("single evaluation, everything at the target") {
        AttackTrace trace;
        trace.rows.push_back({0, 1.0, 1.0, 0.0, 0.0, {0, 8, 0, 0}});
        HopTrace hops = hop_trace(trace, 0);
        REQUIRE(hops.size() == 1);
        CHECK(hops[0].max_label == 1);
        CHECK(hops[0].frequency == 8);
    }
    SUBCASE("source label is excluded from the mode") {
        AttackTrace trace;
        trace.rows.push_back({0, 0.0, 0.0, 0.0, 0.0, {10, 0, 2, 1}});
        trace.rows.push_back({5, 0.1, 0.1, 1.0, 2.0, {5, 1, 3, 3}});
        HopTrace hops = hop_trace(trace, 0);
        CHECK(hops[0].max_label == 2);
        CHECK(hops[0].frequency == 2);
        CHECK(hops[1].max_label == 2);  // tie between 2 and 3 keeps the lowest
        CHECK(hops[1].frequency == 3);
    }
    SUBCASE("all samples still at the source gives frequency zero") {
        AttackTrace trace;
        trace.rows.push_back({0, 0.0, 0.0, 0.0, 0.0, {9, 0, 0}});
        HopTrace hops = hop_trace(trace, 0);
        CHECK(hops[0].max_label == 1);
        CHECK(hops[0].frequency == 0);
    }
}

TEST_CASE("distance table statistics") {
    SUBCASE("mean and std match a direct recomputation; single repeat has zero std") {
        DistanceCell cell;
        cell.source = 0;
        cell.target = 1;
        cell.norms = {4.0, 6.0, 5.0};
        double mean = (4.0 + 6.0 + 5.0) / 3.0;
        double var = ((4 - mean) * (4 - mean) + (6 - mean) * (6 - mean) +
                      (5 - mean) * (5 - mean)) /
                     3.0;
        // the table builder fills these: emulate and verify the convention
        DistanceTableConfig cfg;
        cfg.class_list = {0, 1};
        // statistical helpers are exercised through distance_asymmetry/pooled_std
        DistanceCell back = cell;
        back.mean = mean;
        back.stddev = std::sqrt(var);
        DistanceCell fwd;
        fwd.source = 1;
        fwd.target = 0;
        fwd.norms = {10.0};
        fwd.mean = 10.0;
        fwd.stddev = 0.0;  // repeats = 1
        DistanceTable table{back, fwd};
        CHECK(distance_asymmetry(table) == doctest::Approx(10.0 - mean));
        CHECK(pooled_std(table) == doctest::Approx(std::sqrt((var + 0.0) / 2.0)));
    }
}

TEST_CASE("distance_table runs unbounded attacks per ordered pair") {
    // Tiny deterministic setup: intensity-separated classes on a small net.
    Rng rng(131);
    LabeledDataset train_set;
    for (int i = 0; i < 45; ++i) {
        int label = i % 3;
        Tensor img({4, 4, 1});
        double base = label == 0 ? 30.0 : label == 1 ? 128.0 : 225.0;
        for (double& v : img.data) v = base + rng.uniform(-20.0, 20.0);
        train_set.samples.push_back({img, label});
    }
    Classifier net = make_reference_classifier(3, 4, 4, 1, 3);
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 9;
    tc.learning_rate = 0.08;
    tc.seed = 4;
    train(net, train_set, train_set, tc);
    REQUIRE(accuracy(net, train_set) == 1.0);

    DistanceTableConfig cfg;
    cfg.class_list = {0, 1};
    cfg.repeats = 2;
    cfg.fool_target = 0.9;
    cfg.batch_size = 8;
    cfg.max_iters = 400;
    cfg.eval_every = 5;
    cfg.rng_seed = 21;
    DistanceTable table = distance_table(net, train_set, cfg);
    REQUIRE(table.size() == 2);  // (0,1) and (1,0); the diagonal is excluded
    for (const auto& cell : table) {
        CHECK(cell.source != cell.target);
        CHECK(cell.attempted == 2);
        if (cell.mean) {
            CHECK(*cell.mean > 0.0);
            double direct = 0.0;
            for (double v : cell.norms) direct += v;
            direct /= static_cast<double>(cell.norms.size());
            CHECK(*cell.mean == doctest::Approx(direct));
        }
    }
    SUBCASE("deterministic") {
        DistanceTable again = distance_table(net, train_set, cfg);
        REQUIRE(again.size() == table.size());
        for (std::size_t i = 0; i < table.size(); ++i)
            CHECK(again[i].norms == table[i].norms);
    }
}

TEST_CASE("report aggregates ratio, leakage and norms") {
    Classifier net = threshold_net();
    LabeledDataset eval_set;
    // source class 0: low pixels; target 1: high; plus pseudo-classes 2, 3
    // folded into non-source rates via their own labels is impossible with
    // num_classes = 2, so use a 4-class variant.
    Classifier net4;
    net4.num_classes = 4;
    net4.input_shape = {1, 1, 1};
    net4.conv_base_end = 1;
    Tensor stem({1, 1, 1, 1});
    stem.data = {1.0};
    net4.layers.push_back(Conv2d{1, 1, 1, 1, 1, 0, stem, Tensor({1})});
    net4.layers.push_back(Flatten{});
    Tensor w({1, 4});
    w.data = {-1.0, 1.0, 0.0, 0.0};
    Tensor b({4});
    b.data = {100.0, -100.0, -1e6, -1e6};
    net4.layers.push_back(Dense{1, 4, w, b});
    net4.validate();

    for (double v : {10.0, 20.0, 30.0, 40.0}) eval_set.samples.push_back({pixel(v), 0});
    for (double v : {10.0, 150.0}) eval_set.samples.push_back({pixel(v), 2});
    for (double v : {150.0, 160.0}) eval_set.samples.push_back({pixel(v), 3});
    eval_set.samples.push_back({pixel(200.0), 1});  // target class, excluded

    Perturbation pert;
    pert.p = pixel(-120.0);  // subtracting -120 adds 120: low pixels cross 100
    pert.bound = {NormMode::unbounded, 0.0};

    FoolingReport rep = report(net4, pert, eval_set, 0, 1);
    CHECK(rep.n_source == 4);
    CHECK(rep.n_nonsource == 4);
    CHECK(rep.fooling_ratio == doctest::Approx(1.0));  // all sources pushed past 100
    // class 2: 10 -> 130 (target), 150 -> 255 clipped (target): rate 1.0
    // class 3: both already >= 100: rate 1.0
    CHECK(rep.per_class_target_rate.size() == 2);
    CHECK(rep.per_class_target_rate.count(1) == 0);
    CHECK(rep.leakage == doctest::Approx(1.0));
    CHECK(rep.linf == doctest::Approx(120.0));
    CHECK(rep.l2 == doctest::Approx(120.0));

    SUBCASE("zero perturbation on an accurate model reports zeros") {
        Perturbation zero;
        zero.p = pixel(0.0);
        FoolingReport r0 = report(net4, zero, eval_set, 0, 1);
        CHECK(r0.fooling_ratio == 0.0);
        // class 2 has one sample at 150 already predicted as target
        CHECK(r0.per_class_target_rate.at(2) == doctest::Approx(0.5));
    }
    SUBCASE("brute-force recount matches") {
        FoolingReport r = report(net4, pert, eval_set, 0, 1);
        int fooled = 0, total = 0;
        for (const auto& s : eval_set.samples) {
            if (s.label != 0) continue;
            ++total;
            if (predict_with_confidence(net4, perturb_and_clip(s.image, pert.p)).first == 1)
                ++fooled;
        }
        CHECK(r.fooling_ratio == doctest::Approx(static_cast<double>(fooled) / total));
    }
}
