#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pertfool/datagen.hpp"
#include "pertfool/rng.hpp"

using namespace pertfool;

TEST_CASE("digit dataset shape, labels and range") {
    DigitDataConfig cfg;
    cfg.per_class = 5;
    cfg.seed = 1;
    LabeledDataset data = make_digit_dataset(cfg);
    CHECK(data.samples.size() == 50);
    std::vector<int> counts(10, 0);
    for (const auto& s : data.samples) {
        CHECK(s.image.shape == std::vector<std::size_t>{28, 28, 1});
        ++counts[s.label];
        for (double v : s.image.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 255.0);
        }
    }
    for (int c : counts) CHECK(c == 5);
}

TEST_CASE("generation is deterministic per seed") {
    DigitDataConfig cfg;
    cfg.per_class = 3;
    cfg.seed = 77;
    LabeledDataset a = make_digit_dataset(cfg);
    LabeledDataset b = make_digit_dataset(cfg);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        CHECK(a.samples[i].image.data == b.samples[i].image.data);

    cfg.seed = 78;
    LabeledDataset c = make_digit_dataset(cfg);
    CHECK(a.samples[0].image.data != c.samples[0].image.data);
}

TEST_CASE("both stroke polarities occur") {
    DigitDataConfig cfg;
    cfg.per_class = 40;
    cfg.seed = 9;
    LabeledDataset data = make_digit_dataset(cfg);
    int brighter = 0, darker = 0;
    for (const auto& s : data.samples) {
        // compare the stroke region against the 128 background
        double extreme_hi = 0.0, extreme_lo = 0.0;
        for (double v : s.image.data) {
            extreme_hi = std::max(extreme_hi, v - 128.0);
            extreme_lo = std::max(extreme_lo, 128.0 - v);
        }
        if (extreme_hi > extreme_lo)
            ++brighter;
        else
            ++darker;
    }
    CHECK(brighter > 50);
    CHECK(darker > 50);
}
