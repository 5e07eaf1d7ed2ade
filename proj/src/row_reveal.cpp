#include "ase/row_reveal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

namespace ase {

namespace {

// Segment bit order: a (top), b (top right), c (bottom right), d (bottom),
// e (bottom left), f (top left), g (middle).
constexpr unsigned kSegments[10] = {
    0b0111111,  // 0: abcdef
    0b0000110,  // 1: bc
    0b1011011,  // 2: abdeg
    0b1001111,  // 3: abcdg
    0b1100110,  // 4: bcfg
    0b1101101,  // 5: acdfg
    0b1111101,  // 6: acdefg
    0b0000111,  // 7: abc
    0b1111111,  // 8
    0b1101111,  // 9: abcdfg
};

std::vector<double> softmax(const std::vector<double>& log_weights) {
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> out(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_weights[i] - m);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

ClassPixelModel::ClassPixelModel(int num_classes, int rows, int cols, std::vector<double> ink_prob)
    : num_classes_(num_classes), rows_(rows), cols_(cols), ink_(std::move(ink_prob)) {
  if (num_classes <= 0 || rows <= 0 || cols <= 0) {
    throw ConfigError("ClassPixelModel: dimensions must be positive");
  }
  if (ink_.size() != static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(rows) *
                         static_cast<std::size_t>(cols)) {
    throw ConfigError("ClassPixelModel: parameter table has wrong size");
  }
  for (double p : ink_) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("ClassPixelModel: Bernoulli parameter outside [0, 1]");
  }
}

ClassPixelModel ClassPixelModel::glyphs(int num_classes, int rows, int cols, double ink,
                                        double background) {
  if (num_classes < 1 || num_classes > 10) {
    throw ConfigError("glyph model supports 1 to 10 classes");
  }
  if (rows < 10 || cols < 6) throw ConfigError("glyph model needs at least 10x6 pixels");
  // Glyph box and stroke geometry as fractions of the canvas.
  const int top = rows / 7;
  const int bottom = rows - 1 - rows / 7;
  const int left = cols * 2 / 7;
  const int right = cols - 1 - cols * 2 / 7;
  const int stroke = std::max(1, rows / 10);
  const int mid = (top + bottom) / 2;

  std::vector<double> table;
  table.reserve(static_cast<std::size_t>(num_classes * rows * cols));
  for (int cls = 0; cls < num_classes; ++cls) {
    const unsigned seg = kSegments[cls];
    auto on = [&](int bit) { return (seg >> bit) & 1U; };
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const bool in_cols = c >= left && c <= right;
        const bool left_bar = c >= left && c < left + stroke;
        const bool right_bar = c > right - stroke && c <= right;
        const bool upper = r >= top && r <= mid;
        const bool lower = r >= mid && r <= bottom;
        bool inked = false;
        inked |= on(0) && in_cols && r >= top && r < top + stroke;
        inked |= on(1) && right_bar && upper;
        inked |= on(2) && right_bar && lower;
        inked |= on(3) && in_cols && r > bottom - stroke && r <= bottom;
        inked |= on(4) && left_bar && lower;
        inked |= on(5) && left_bar && upper;
        inked |= on(6) && in_cols && r >= mid - stroke / 2 && r < mid - stroke / 2 + stroke;
        table.push_back(inked ? ink : background);
      }
    }
  }
  return ClassPixelModel(num_classes, rows, cols, std::move(table));
}

ClassPixelModel ClassPixelModel::estimate(std::span<const std::uint8_t> images,
                                          std::span<const std::uint8_t> labels, int num_classes,
                                          int rows, int cols, double smoothing) {
  const std::size_t pixels = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (pixels == 0 || images.size() != labels.size() * pixels) {
    throw ConfigError("dataset: image bytes do not match label count and image size");
  }
  std::vector<double> ink_count(static_cast<std::size_t>(num_classes) * pixels, 0.0);
  std::vector<double> class_count(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int cls = labels[n];
    if (cls >= num_classes) throw ConfigError("dataset: label out of range");
    class_count[static_cast<std::size_t>(cls)] += 1.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (images[n * pixels + p] != 0) ink_count[static_cast<std::size_t>(cls) * pixels + p] += 1.0;
    }
  }
  std::vector<double> table(ink_count.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double n = class_count[i / pixels];
    table[i] = (ink_count[i] + smoothing) / (n + 2.0 * smoothing);
  }
  return ClassPixelModel(num_classes, rows, cols, std::move(table));
}

ClassPixelModel ClassPixelModel::load_dataset(const std::filesystem::path& images,
                                              const std::filesystem::path& labels,
                                              int num_classes, int rows, int cols) {
  auto image_bytes = read_bytes(images);
  for (auto& b : image_bytes) b = b >= 128 ? 1 : 0;
  const auto label_bytes = read_bytes(labels);
  return estimate(image_bytes, label_bytes, num_classes, rows, cols);
}

double ClassPixelModel::row_log_likelihood(int cls, int row,
                                           std::span<const std::uint8_t> pixels) const {
  if (static_cast<int>(pixels.size()) != cols_) throw ConfigError("row has wrong width");
  double ll = 0.0;
  for (int c = 0; c < cols_; ++c) {
    const double p = ink(cls, row, c);
    ll += std::log(pixels[static_cast<std::size_t>(c)] ? p : 1.0 - p);
  }
  return ll;
}

std::vector<std::uint8_t> ClassPixelModel::sample_image(int cls, Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> image(static_cast<std::size_t>(rows_ * cols_));
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      image[static_cast<std::size_t>(r * cols_ + c)] = u(rng) < ink(cls, r, c) ? 1 : 0;
    }
  }
  return image;
}

// ---------------------------------------------------------------------------

RowRevealEnv::RowRevealEnv(const ClassPixelModel& model, int true_class,
                           std::vector<std::uint8_t> image)
    : model_(&model), true_class_(true_class), image_(std::move(image)) {
  if (true_class < 0 || true_class >= model.num_classes()) {
    throw ConfigError("RowRevealEnv: class out of range");
  }
  if (image_.size() != static_cast<std::size_t>(model.rows() * model.cols())) {
    throw ConfigError("RowRevealEnv: image has wrong size");
  }
  row_ll_.resize(static_cast<std::size_t>(model.rows() * model.num_classes()));
  for (int r = 0; r < model.rows(); ++r) {
    for (int c = 0; c < model.num_classes(); ++c) {
      row_ll_[static_cast<std::size_t>(r * model.num_classes() + c)] =
          model.row_log_likelihood(c, r, row(r));
    }
  }
}

RowRevealEnv RowRevealEnv::sample(const ClassPixelModel& model, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, model.num_classes() - 1);
  const int cls = pick(rng);
  auto image = model.sample_image(cls, rng);
  return RowRevealEnv(model, cls, std::move(image));
}

std::span<const std::uint8_t> RowRevealEnv::row(int r) const {
  if (r < 0 || r >= model_->rows()) throw ConfigError("RowRevealEnv: row out of range");
  return std::span<const std::uint8_t>(image_).subspan(
      static_cast<std::size_t>(r * model_->cols()), static_cast<std::size_t>(model_->cols()));
}

RevealedRow RowRevealEnv::reveal(int r) const {
  const auto px = row(r);
  return {r, std::vector<std::uint8_t>(px.begin(), px.end())};
}

DiscreteBelief row_reveal_class_posterior(const ClassPixelModel& model,
                                          std::span<const RevealedRow> revealed) {
  std::set<int> seen;
  std::vector<double> log_post(static_cast<std::size_t>(model.num_classes()), 0.0);
  for (const auto& rr : revealed) {
    if (!seen.insert(rr.row).second) throw ConfigError("revealed rows must be distinct");
    for (int c = 0; c < model.num_classes(); ++c) {
      log_post[static_cast<std::size_t>(c)] += model.row_log_likelihood(c, rr.row, rr.pixels);
    }
  }
  return DiscreteBelief(softmax(log_post));
}

DiscreteBelief row_reveal_class_posterior(const RowRevealEnv& env, std::span<const int> rows) {
  const int k = env.model().num_classes();
  std::vector<double> log_post(static_cast<std::size_t>(k), 0.0);
  for (int r : rows) {
    for (int c = 0; c < k; ++c) log_post[static_cast<std::size_t>(c)] += env.row_log_likelihood(r, c);
  }
  return DiscreteBelief(softmax(log_post));
}

}  // namespace ase
