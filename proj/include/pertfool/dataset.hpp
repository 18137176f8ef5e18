#pragma once

#include <string>
#include <vector>

#include "pertfool/tensor.hpp"

namespace pertfool {

struct Sample {
    Tensor image;  // (H, W, C), values in [0, 255]
    int label = 0;
};

enum class Split { train, test };

struct LabeledDataset {
    std::vector<Sample> samples;
    Split split = Split::train;

    std::size_t size() const { return samples.size(); }

    LabeledDataset filter_label(int label) const {
        LabeledDataset out;
        out.split = split;
        for (const auto& s : samples)
            if (s.label == label) out.samples.push_back(s);
        return out;
    }

    LabeledDataset exclude_label(int label) const {
        LabeledDataset out;
        out.split = split;
        for (const auto& s : samples)
            if (s.label != label) out.samples.push_back(s);
        return out;
    }
};

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

}  // namespace pertfool
