#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gtal/common.hpp"

namespace gtal {

struct GroundTruthInstance {
  int class_id = 0;
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds, > start

  bool operator==(const GroundTruthInstance&) const = default;
};

/// N x D snippet features plus the temporal stride of one snippet.
struct FeatureSequence {
  Matrix data;
  double snippet_stride = 1.0;

  std::size_t length() const { return data.rows(); }
  std::size_t dim() const { return data.cols(); }

  bool operator==(const FeatureSequence&) const = default;
};

struct VideoRecord {
  std::string id;
  FeatureSequence features;
  std::vector<int> label;  // multi-hot, size C_I
  std::vector<GroundTruthInstance> instances;
  double duration = 0.0;

  int num_classes() const { return static_cast<int>(label.size()); }
  bool operator==(const VideoRecord&) const = default;
};

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Dataset {
  std::string distribution_id;
  Split split = Split::train;
  int num_classes = 0;
  std::vector<VideoRecord> videos;

  std::size_t feature_dim() const { return videos.empty() ? 0 : videos.front().features.dim(); }
  bool operator==(const Dataset&) const = default;
};

struct SynthConfig {
  std::string distribution_id = "source";
  Split split = Split::train;
  int num_classes = 8;
  int feature_dim = 64;
  int videos_per_split = 100;
  double duration_median = 3.0;
  double duration_log_sigma = 0.35;
  double video_length_min = 40.0;
  double video_length_max = 80.0;
  int instances_min = 1;
  int instances_max = 4;
  double domain_offset_scale = 1.0;
  double noise_sigma = 0.1;
  double boundary_blend_width = 2.0;  // snippets
  double snippet_stride = 1.0;        // seconds
  std::uint64_t seed = 0;
  /// Shared by every distribution of one benchmark so classes stay recognizable.
  std::uint64_t prototype_seed = 0;

  void validate() const;
};

/// Vectors the generator mixes to build snippet features.
struct DistributionBasis {
  std::vector<std::vector<double>> class_prototypes;  // C_I unit vectors
  std::vector<double> background;                        // unit vector
  std::vector<double> offset;                            // |offset| = domain_offset_scale
};

DistributionBasis distribution_basis(const SynthConfig& cfg);

Dataset generate_synthetic_dataset(const SynthConfig& cfg);

/// Per-snippet ground-truth class by snippet centre; background is index C_I.
std::vector<int> snippet_labels(const VideoRecord& video);

/// Throws Error when a record breaks the data-model invariants.
void validate_video(const VideoRecord& video, int num_classes);
void validate_dataset(const Dataset& ds);

struct DurationStats {
  std::size_t count = 0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double mean = 0.0;
};

DurationStats duration_stats(const Dataset& ds);

inline constexpr int kDatasetFormatVersion = 1;

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void write_feature_file(const FeatureSequence& feats, const std::filesystem::path& file);
/// Reads a .feat payload; the stride lives in the manifest and is passed in.
FeatureSequence read_feature_file(const std::filesystem::path& file, double stride);

}  // namespace gtal
