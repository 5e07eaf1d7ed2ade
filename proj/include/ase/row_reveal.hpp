#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ase/belief.hpp"
#include "ase/common.hpp"

namespace ase {

/// Per-class, per-pixel Bernoulli generative model of binary images.
class ClassPixelModel {
 public:
  ClassPixelModel(int num_classes, int rows, int cols, std::vector<double> ink_prob);

  /// Seven-segment digit glyphs (up to 10 classes) with ink probability
  /// `ink` on strokes and `background` elsewhere.
  static ClassPixelModel glyphs(int num_classes = 10, int rows = 28, int cols = 28,
                                double ink = 0.9, double background = 0.05);

  /// Laplace-smoothed estimate from labelled binary images (row-major, one
  /// byte per pixel, nonzero = ink).
  static ClassPixelModel estimate(std::span<const std::uint8_t> images,
                                  std::span<const std::uint8_t> labels, int num_classes, int rows,
                                  int cols, double smoothing = 1.0);

  /// Reads a flat image file (N * rows * cols bytes, >= 128 counts as ink)
  /// and a label file (N bytes) and estimates the model.
  static ClassPixelModel load_dataset(const std::filesystem::path& images,
                                      const std::filesystem::path& labels, int num_classes,
                                      int rows, int cols);

  int num_classes() const { return num_classes_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double ink(int cls, int row, int col) const {
    return ink_[(static_cast<std::size_t>(cls) * static_cast<std::size_t>(rows_) +
                 static_cast<std::size_t>(row)) * static_cast<std::size_t>(cols_) +
                static_cast<std::size_t>(col)];
  }

  /// log p(pixels | class, row).
  double row_log_likelihood(int cls, int row, std::span<const std::uint8_t> pixels) const;
  std::vector<std::uint8_t> sample_image(int cls, Rng& rng) const;

 private:
  int num_classes_;
  int rows_;
  int cols_;
  std::vector<double> ink_;
};

/// One revealed row: its index and binary pixel values.
struct RevealedRow {
  int row = 0;
  std::vector<std::uint8_t> pixels;
};

/// One episode of the bandwidth-limited classification task: a hidden class
/// and an image sampled from its pixel model, shown one row per timestep.
class RowRevealEnv {
 public:
  RowRevealEnv(const ClassPixelModel& model, int true_class, std::vector<std::uint8_t> image);
  static RowRevealEnv sample(const ClassPixelModel& model, Rng& rng);

  const ClassPixelModel& model() const { return *model_; }
  int true_class() const { return true_class_; }
  int horizon() const { return model_->rows(); }
  const std::vector<std::uint8_t>& image() const { return image_; }
  std::span<const std::uint8_t> row(int r) const;
  RevealedRow reveal(int r) const;

  /// log p(row r | class) for every (row, class), row-major.
  const std::vector<double>& row_log_likelihoods() const { return row_ll_; }
  double row_log_likelihood(int row, int cls) const {
    return row_ll_[static_cast<std::size_t>(row) * static_cast<std::size_t>(model_->num_classes()) +
                   static_cast<std::size_t>(cls)];
  }

 private:
  const ClassPixelModel* model_;
  int true_class_;
  std::vector<std::uint8_t> image_;
  std::vector<double> row_ll_;
};

/// Exact class posterior under a uniform class prior given revealed rows.
DiscreteBelief row_reveal_class_posterior(const ClassPixelModel& model,
                                          std::span<const RevealedRow> revealed);

/// Same, from row indices of `env`'s image using its cached likelihoods.
DiscreteBelief row_reveal_class_posterior(const RowRevealEnv& env, std::span<const int> rows);

}  // namespace ase
