#include "pertfool/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "pertfool/rng.hpp"

namespace pertfool {

namespace {

// 5x7 glyphs, one row per byte, bit 4 = leftmost column.
constexpr unsigned char kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

constexpr std::size_t kCanvas = 28;
constexpr double kBackground = 128.0;

// Bilinear lookup into the 5x7 glyph treated as a [0,1] intensity field.
double glyph_at(int digit, double gx, double gy) {
    if (gx < -0.5 || gy < -0.5 || gx > 4.5 || gy > 6.5) return 0.0;
    const double x0 = std::floor(gx), y0 = std::floor(gy);
    const double fx = gx - x0, fy = gy - y0;
    auto texel = [&](double x, double y) -> double {
        const int xi = static_cast<int>(x), yi = static_cast<int>(y);
        if (xi < 0 || xi > 4 || yi < 0 || yi > 6) return 0.0;
        return (kGlyphs[digit][yi] >> (4 - xi)) & 1 ? 1.0 : 0.0;
    };
    return texel(x0, y0) * (1 - fx) * (1 - fy) + texel(x0 + 1, y0) * fx * (1 - fy) +
           texel(x0, y0 + 1) * (1 - fx) * fy + texel(x0 + 1, y0 + 1) * fx * fy;
}

}  // namespace

Tensor render_digit(int digit, Rng& rng) {
    if (digit < 0 || digit > 9) throw InputError("render_digit: digit must be 0..9");

    const double rot = rng.uniform(-0.26, 0.26);        // radians, about +-15 deg
    const double scale = rng.uniform(0.82, 1.2);
    const double shear = rng.uniform(-0.15, 0.15);
    const double dx = rng.uniform(-3.0, 3.0);
    const double dy = rng.uniform(-3.0, 3.0);
    const double polarity = rng.next_double() < 0.5 ? 1.0 : -1.0;
    const double amplitude = rng.uniform(50.0, 100.0);
    const double noise_sigma = rng.uniform(4.0, 12.0);

    // Canvas pixel -> glyph coordinates: center, inverse-rotate/scale/shear,
    // map the 28x28 box onto the 5x7 cell grid (cell size ~3.6 px).
    const double cos_r = std::cos(rot), sin_r = std::sin(rot);
    const double cell = 3.6 * scale;

    Tensor img({kCanvas, kCanvas, 1});
    for (std::size_t y = 0; y < kCanvas; ++y) {
        for (std::size_t x = 0; x < kCanvas; ++x) {
            const double cx = static_cast<double>(x) - (kCanvas - 1) / 2.0 - dx;
            const double cy = static_cast<double>(y) - (kCanvas - 1) / 2.0 - dy;
            const double rx = cos_r * cx + sin_r * cy;
            const double ry = -sin_r * cx + cos_r * cy + shear * cx;
            const double gx = rx / cell + 2.0;
            const double gy = ry / cell + 3.0;
            const double ink = glyph_at(digit, gx, gy);
            double v = kBackground + polarity * amplitude * ink +
                       noise_sigma * rng.next_gaussian();
            img.at(y, x, 0) = std::clamp(v, 0.0, 255.0);
        }
    }
    return img;
}

LabeledDataset make_digit_dataset(const DigitDataConfig& cfg) {
    LabeledDataset data;
    data.split = cfg.split;
    data.samples.reserve(cfg.per_class * 10);
    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < cfg.per_class; ++i)
        for (int digit = 0; digit < 10; ++digit)
            data.samples.push_back({render_digit(digit, rng), digit});
    return data;
}

}  // namespace pertfool
