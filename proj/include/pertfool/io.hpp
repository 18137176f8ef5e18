#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pertfool/analysis.hpp"
#include "pertfool/attack.hpp"
#include "pertfool/explain.hpp"
#include "pertfool/nn.hpp"

namespace pertfool::io {

// ---------------------------------------------------------------------------
// IDX datasets (images type 0x08, rank 3; labels type 0x08, rank 1)
// ---------------------------------------------------------------------------

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        Split split = Split::train);

void save_idx(const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path, const LabeledDataset& data);

/// Loads a dataset either from IDX files following the
/// {train,test}-{images,labels}.idx convention inside `dir`, or from
/// per-class subdirectories (named by label) of PGM/PPM files.
LabeledDataset load_dataset_dir(const std::filesystem::path& dir, Split split);

// ---------------------------------------------------------------------------
// Checkpoints ("PFNN"), perturbations ("PFPT"), Gaussian samplers ("PFGS")
// ---------------------------------------------------------------------------

void save_classifier(const std::filesystem::path& path, const Classifier& net);
Classifier load_classifier(const std::filesystem::path& path);

void save_perturbation(const std::filesystem::path& path, const Perturbation& pert);
Perturbation load_perturbation(const std::filesystem::path& path);

void save_gaussian_sampler(const std::filesystem::path& path, const GaussianSampler& sampler);
GaussianSampler load_gaussian_sampler(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Portable images (PGM P5 / PPM P6, maxval 255)
// ---------------------------------------------------------------------------

/// Writes (H, W, 1) as P5 and (H, W, 3) as P6. Values are expected as bytes
/// already (0..255, integral doubles).
void save_image(const std::filesystem::path& path, const Tensor& bytes_image);

Tensor load_image(const std::filesystem::path& path);

/// Mask image: nonzero pixels mark the corrupt region (value 1).
Tensor load_mask_pgm(const std::filesystem::path& path);

/// Round half away from zero, the byte-export convention everywhere.
double round_half_away(double v);

/// clamp(round(10 p + 128), 0, 255) per channel - the perturbation
/// visualization convention.
Tensor visualization_image(const Tensor& p);

/// clamp(s - p, 0, 255) rounded to bytes.
Tensor adversarial_image(const Tensor& sample, const Tensor& p);

// ---------------------------------------------------------------------------
// Structured text: ndjson traces, report documents, CSV tables
// ---------------------------------------------------------------------------

/// One ndjson object per evaluation row, interleaved with event records; the
/// first line is a "start" record carrying the run metadata.
void save_trace(const std::filesystem::path& path, const AttackTrace& trace,
                const std::map<std::string, std::string>& meta);

AttackTrace load_trace(const std::filesystem::path& path,
                       std::map<std::string, std::string>* meta_out = nullptr);

std::string report_to_json(const FoolingReport& rep);
void save_report(const std::filesystem::path& path, const FoolingReport& rep);

/// Column order: t,label,count.
void save_hops_csv(const std::filesystem::path& path, const HopTrace& hops);

/// Column order: source,target,mean_l2,std_l2,converged,attempted.
void save_distance_csv(const std::filesystem::path& path, const DistanceTable& table);

}  // namespace pertfool::io
