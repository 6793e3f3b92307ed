#pragma once

#include "mat/image.hpp"
#include "mat/tensor.hpp"

// Synthetic image distributions standing in for photo datasets at desk scale.
// Every image is a pure function of (generator id, seed, index), so any index
// can be produced at any time in any order.

namespace mat {

enum class DatasetKind { kStripes, kGradients, kBlobs, kCheckerboards };

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "stripes") return DatasetKind::kStripes;
  if (s == "gradients") return DatasetKind::kGradients;
  if (s == "blobs") return DatasetKind::kBlobs;
  if (s == "checkerboards") return DatasetKind::kCheckerboards;
  throw ContractError("unknown dataset: " + s +
                      " (expected stripes|gradients|blobs|checkerboards)");
}

inline std::string dataset_kind_to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kStripes: return "stripes";
    case DatasetKind::kGradients: return "gradients";
    case DatasetKind::kBlobs: return "blobs";
    case DatasetKind::kCheckerboards: return "checkerboards";
  }
  return "?";
}

struct SyntheticDataset {
  DatasetKind kind = DatasetKind::kStripes;
  int64_t size = 64;
  uint64_t seed = 0;

  ImageF image(int64_t index) const {
    Rng rng(splitmix64(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(index) + 1));
    ImageF img(3, size, size);
    switch (kind) {
      case DatasetKind::kStripes: render_stripes(img, rng); break;
      case DatasetKind::kGradients: render_gradient(img, rng); break;
      case DatasetKind::kBlobs: render_blobs(img, rng); break;
      case DatasetKind::kCheckerboards: render_checkerboard(img, rng); break;
    }
    return img;
  }

  // [b, 3, size, size] batch for the given indices
  Tensor<float> batch(const std::vector<int64_t>& indices) const {
    const int64_t b = static_cast<int64_t>(indices.size());
    std::vector<float> data(static_cast<size_t>(b * 3 * size * size));
    for (int64_t i = 0; i < b; ++i) {
      ImageF img = image(indices[static_cast<size_t>(i)]);
      std::copy(img.data.begin(), img.data.end(),
                data.begin() + static_cast<int64_t>(i * 3 * size * size));
    }
    return Tensor<float>::from({b, 3, size, size}, std::move(data));
  }

 private:
  static void pick_two_colors(Rng& rng, float a[3], float b[3]) {
    for (int c = 0; c < 3; ++c) a[c] = static_cast<float>(rng.uniform(-1, 1));
    // keep the pair visually distinct
    for (int c = 0; c < 3; ++c) {
      b[c] = static_cast<float>(rng.uniform(-1, 1));
      if (std::abs(b[c] - a[c]) < 0.5f) b[c] = a[c] > 0 ? a[c] - 0.8f : a[c] + 0.8f;
      b[c] = std::max(-1.0f, std::min(1.0f, b[c]));
    }
  }

  void render_stripes(ImageF& img, Rng& rng) const {
    float col_a[3], col_b[3];
    pick_two_colors(rng, col_a, col_b);
    const int64_t period = rng.uniform_int(6, 24);
    const int64_t phase = rng.uniform_int(0, period - 1);
    const int64_t orient = rng.uniform_int(0, 3);  // h, v, diag, anti-diag
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        int64_t coord = orient == 0 ? y : orient == 1 ? x : orient == 2 ? x + y : x - y + size;
        const bool first = ((coord + phase) / period) % 2 == 0;
        for (int64_t c = 0; c < 3; ++c) img.at(c, y, x) = first ? col_a[c] : col_b[c];
      }
  }

  void render_gradient(ImageF& img, Rng& rng) const {
    float col_a[3], col_b[3];
    pick_two_colors(rng, col_a, col_b);
    const double angle = rng.uniform(0, 2 * 3.14159265358979323846);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double span = (std::abs(dx) + std::abs(dy)) * static_cast<double>(size);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        double t = (dx * static_cast<double>(x) + dy * static_cast<double>(y)) / span + 0.5;
        t = std::max(0.0, std::min(1.0, t));
        for (int64_t c = 0; c < 3; ++c)
          img.at(c, y, x) = static_cast<float>((1 - t) * col_a[c] + t * col_b[c]);
      }
  }

  void render_blobs(ImageF& img, Rng& rng) const {
    float bg[3];
    for (int c = 0; c < 3; ++c) bg[c] = static_cast<float>(rng.uniform(-0.8, 0.8));
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < size * size; ++i)
        img.data[static_cast<size_t>(c * size * size + i)] = bg[c];
    const int64_t blobs = rng.uniform_int(2, 5);
    for (int64_t k = 0; k < blobs; ++k) {
      const double cx = rng.uniform(0, static_cast<double>(size));
      const double cy = rng.uniform(0, static_cast<double>(size));
      const double sigma = rng.uniform(static_cast<double>(size) / 12, static_cast<double>(size) / 5);
      float col[3];
      for (int c = 0; c < 3; ++c) col[c] = static_cast<float>(rng.uniform(-1, 1));
      for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          const float wgt = static_cast<float>(std::exp(-d2 / (2 * sigma * sigma)));
          for (int64_t c = 0; c < 3; ++c) {
            float& v = img.at(c, y, x);
            v = std::max(-1.0f, std::min(1.0f, v + wgt * (col[c] - v)));
          }
        }
    }
  }

  void render_checkerboard(ImageF& img, Rng& rng) const {
    float col_a[3], col_b[3];
    pick_two_colors(rng, col_a, col_b);
    const int64_t cell = rng.uniform_int(4, 16);
    const int64_t ox = rng.uniform_int(0, cell - 1);
    const int64_t oy = rng.uniform_int(0, cell - 1);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const bool first = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0;
        for (int64_t c = 0; c < 3; ++c) img.at(c, y, x) = first ? col_a[c] : col_b[c];
      }
  }
};

}  // namespace mat
