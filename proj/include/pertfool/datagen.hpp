#pragma once

#include <cstdint>

#include "pertfool/dataset.hpp"
#include "pertfool/rng.hpp"

namespace pertfool {

/// Synthetic 28x28 grayscale digit dataset used for desk-scale experiments.
/// Each sample is a 5x7 digit glyph, affine-jittered (shift, rotation, scale,
/// shear), rendered on a mid-gray background (128) with a random-amplitude
/// stroke of random polarity plus pixel noise. Both polarities appear in
/// every class, so classifiers trained on it become insensitive to stroke
/// polarity and respond to shape.
struct DigitDataConfig {
    std::size_t per_class = 600;
    std::uint64_t seed = 42;
    Split split = Split::train;
};

LabeledDataset make_digit_dataset(const DigitDataConfig& cfg);

/// One rendered digit; exposed for tests and the python bindings.
Tensor render_digit(int digit, Rng& rng);

}  // namespace pertfool
