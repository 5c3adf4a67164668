#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iif/numkit.hpp"

namespace iif {

enum class TaskKind { Regression, Classification };

const char* to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

/// Feature matrix plus aligned target matrix. Classification targets are
/// probability rows (one-hot for observed labels).
struct Dataset {
  Matrix features;  // N × d
  Matrix targets;   // N × m
  TaskKind kind = TaskKind::Regression;

  [[nodiscard]] int size() const { return static_cast<int>(features.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(features.cols()); }
  [[nodiscard]] int target_dim() const { return static_cast<int>(targets.cols()); }

  /// Copy with the same features and replaced targets.
  [[nodiscard]] Dataset with_targets(Matrix new_targets) const;
  /// Argmax class of each target row.
  [[nodiscard]] std::vector<int> labels() const;

  /// Throws InvalidArgument when row counts disagree, the set is empty, or a
  /// classification row is not a probability vector.
  void validate() const;
};

struct SyntheticSpec {
  int n_train = 100;
  int n_test = 100;
  int dim = 10;
  double sigma_n = 1.0;  // train noise std
  double sigma_s = 1.0;  // test noise std
  NoiseKind train_noise = NoiseKind::Normal;
  NoiseKind test_noise = NoiseKind::Normal;
  std::uint64_t seed = 0;
};

struct LinearTask {
  Dataset train;
  Dataset test;
  Vector weights;
};

/// Features and weights i.i.d. N(0,1); targets x·w + noise, no intercept.
LinearTask gen_linear(const SyntheticSpec& spec);

struct BlobSpec {
  int n_train = 1000;
  int n_test = 200;
  int dim = 10;
  int classes = 4;
  double separation = 2.0;  // class-mean norm, in units of the unit within-class std
  std::uint64_t seed = 0;
};

struct ClassificationTask {
  Dataset train;
  Dataset test;
};

/// Gaussian class clusters around random means of norm `separation`; labels
/// balanced round-robin then shuffled.
ClassificationTask gen_blobs(const BlobSpec& spec);

struct FlipMask {
  std::vector<bool> flipped;
  double fraction = 0.0;
  [[nodiscard]] int count() const;
};

/// Flips exactly round(fraction·N) labels, chosen without replacement, each to
/// a uniformly drawn different class.
std::pair<Dataset, FlipMask> flip_labels(const Dataset& data, double fraction, Rng& rng);

Matrix one_hot(const std::vector<int>& labels, int classes);

/// Row-selected copy in index order. Empty or out-of-range indices throw.
Dataset subset(const Dataset& data, std::span<const int> indices);
inline Dataset subset(const Dataset& data, const std::vector<int>& indices) {
  return subset(data, std::span<const int>(indices));
}

// IDX (big-endian, unsigned-byte payload) ------------------------------------

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& arr);

/// Images as rows scaled to [0,1] (N × h·w). Labels as an N × 1 column of
/// class indices. Rejects the wrong magic and truncated payloads with the
/// failing byte offset in the message.
Matrix parse_idx_images(const std::filesystem::path& path);
Matrix parse_idx_labels(const std::filesystem::path& path);
/// Dispatches on the magic: images scaled to [0,1], labels as raw values.
Matrix parse_idx(const std::filesystem::path& path);

/// Reads an image/label IDX pair into a one-hot classification dataset.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         int limit = 0, int classes = 10);

// CSV: header f0..f{d-1},y0..y{m-1}; one row per sample. ---------------------

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(const std::filesystem::path& path, TaskKind kind);

/// Shortest round-trip decimal representation, locale independent.
std::string format_double(double v);

}  // namespace iif
