#include "fribble/vision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fribble/binary_io.hpp"

namespace fribble {
namespace {

// 3x3 mean with zero padding over a 0/1 image; sums are exact integers.
Silhouette box_blur3(const std::vector<std::uint8_t>& in, int w, int h) {
  std::vector<int> rows(static_cast<std::size_t>(w) * h, 0);
  for (int r = 0; r < h; ++r) {
    const std::uint8_t* src = &in[static_cast<std::size_t>(r) * w];
    int* dst = &rows[static_cast<std::size_t>(r) * w];
    for (int c = 0; c < w; ++c) {
      dst[c] = src[c] + (c > 0 ? src[c - 1] : 0) + (c + 1 < w ? src[c + 1] : 0);
    }
  }
  Silhouette out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int sum = rows[static_cast<std::size_t>(r) * w + c];
      if (r > 0) sum += rows[static_cast<std::size_t>(r - 1) * w + c];
      if (r + 1 < h) sum += rows[static_cast<std::size_t>(r + 1) * w + c];
      out.at(r, c) = sum / 9.0;
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> silhouette_mask(const VoxelObject& v) {
  const int n = v.size();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
  if (v.empty()) return mask;
  const auto box = v.bounds();
  for (int z = box.lo[2]; z <= box.hi[2]; ++z) {
    for (int y = box.lo[1]; y <= box.hi[1]; ++y) {
      std::uint8_t* row = &mask[static_cast<std::size_t>(n - 1 - y) * n];
      for (int x = box.lo[0]; x <= box.hi[0]; ++x) row[x] |= v.at(x, y, z) ? 1 : 0;
    }
  }
  return mask;
}

Silhouette silhouette_from_mask(std::span<const std::uint8_t> mask, int n) {
  if (mask.size() != static_cast<std::size_t>(n) * n) {
    throw std::invalid_argument("mask size does not match grid side");
  }
  double sum_c = 0.0, sum_r = 0.0;
  std::size_t filled = 0;
  int min_c = n, max_c = -1, min_r = n, max_r = -1;
  for (int row = 0; row < n; ++row) {
    for (int x = 0; x < n; ++x) {
      if (!mask[static_cast<std::size_t>(row) * n + x]) continue;
      sum_c += x + 0.5;
      sum_r += row + 0.5;
      ++filled;
      min_c = std::min(min_c, x);
      max_c = std::max(max_c, x);
      min_r = std::min(min_r, row);
      max_r = std::max(max_r, row);
    }
  }
  if (filled == 0) throw EmptyObjectError("cannot project an empty voxel object");

  const double cx = sum_c / static_cast<double>(filled);
  const double cy = sum_r / static_cast<double>(filled);
  const int longer = std::max(max_c - min_c + 1, max_r - min_r + 1);
  const double s = static_cast<double>(kNormalizedExtent) / longer;
  const double half = 0.5 * Silhouette::kSize;

  const int size = Silhouette::kSize;
  std::vector<int> src_row(size), src_col(size);
  for (int i = 0; i < size; ++i) {
    src_row[i] = static_cast<int>(std::floor(cy + (i + 0.5 - half) / s));
    src_col[i] = static_cast<int>(std::floor(cx + (i + 0.5 - half) / s));
  }
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(size) * size, 0);
  for (int r = 0; r < size; ++r) {
    const int mr = src_row[r];
    if (mr < 0 || mr >= n) continue;
    for (int c = 0; c < size; ++c) {
      const int mc = src_col[c];
      if (mc < 0 || mc >= n) continue;
      raw[static_cast<std::size_t>(r) * size + c] = mask[static_cast<std::size_t>(mr) * n + mc];
    }
  }
  return box_blur3(raw, size, size);
}

Silhouette project_unrotated(const VoxelObject& v) {
  if (v.empty()) throw EmptyObjectError("cannot project an empty voxel object");
  return silhouette_from_mask(silhouette_mask(v), v.size());
}

Silhouette project(const VoxelObject& v, const Viewpoint& vp) {
  if (v.empty()) throw EmptyObjectError("cannot project an empty voxel object");
  if (vp.heading == 0.0 && vp.pitch == 0.0) return project_unrotated(v);
  return project_unrotated(rotate(v, vp));
}

std::size_t hog_length(int width, int height, const HogParams& p) {
  const int cells_x = width / p.cell, cells_y = height / p.cell;
  const int blocks_x = std::max(0, cells_x - p.block + 1);
  const int blocks_y = std::max(0, cells_y - p.block + 1);
  return static_cast<std::size_t>(blocks_x) * blocks_y * p.block * p.block * p.bins;
}

HogDescriptor hog(const Silhouette& s, const HogParams& p) {
  const int w = s.width, h = s.height;
  const int cells_x = w / p.cell, cells_y = h / p.cell;
  std::vector<double> cells(static_cast<std::size_t>(cells_x) * cells_y * p.bins, 0.0);
  const double bin_width = 180.0 / p.bins;

  for (int r = 0; r < cells_y * p.cell; ++r) {
    for (int c = 0; c < cells_x * p.cell; ++c) {
      const double gx = s.at(r, std::min(c + 1, w - 1)) - s.at(r, std::max(c - 1, 0));
      const double gy = s.at(std::min(r + 1, h - 1), c) - s.at(std::max(r - 1, 0), c);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double theta = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (theta < 0.0) theta += 180.0;
      if (theta >= 180.0) theta -= 180.0;
      const double pos = theta / bin_width;
      const double lower = std::floor(pos);
      const double frac = pos - lower;
      const int b0 = static_cast<int>(lower) % p.bins;
      const int b1 = (b0 + 1) % p.bins;
      double* hist = &cells[(static_cast<std::size_t>(r / p.cell) * cells_x + c / p.cell) * p.bins];
      hist[b0] += mag * (1.0 - frac);
      if (frac > 0.0) hist[b1] += mag * frac;
    }
  }

  HogDescriptor out;
  out.values.reserve(hog_length(w, h, p));
  std::vector<double> block;
  for (int by = 0; by + p.block <= cells_y; ++by) {
    for (int bx = 0; bx + p.block <= cells_x; ++bx) {
      block.clear();
      for (int i = 0; i < p.block; ++i) {
        for (int j = 0; j < p.block; ++j) {
          const double* hist =
              &cells[(static_cast<std::size_t>(by + i) * cells_x + (bx + j)) * p.bins];
          block.insert(block.end(), hist, hist + p.bins);
        }
      }
      double norm2 = 0.0;
      for (double x : block) norm2 += x * x;
      const double inv = 1.0 / std::sqrt(norm2 + p.epsilon * p.epsilon);
      for (double x : block) out.values.push_back(static_cast<float>(x * inv));
    }
  }
  return out;
}

double correlation_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("descriptor length mismatch");
  if (a.empty()) return 0.0;
  const auto n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a, db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(var_a * var_b), 0.0, 1.0);
}

std::vector<HogDescriptor> view_descriptors(const VoxelObject& v) {
  if (v.empty()) throw EmptyObjectError("hypothesis object is empty");
  std::vector<HogDescriptor> out;
  out.reserve(kViewCount);
  for (const auto& vp : viewpoint_grid()) out.push_back(hog(project(v, vp)));
  return out;
}

double vision_likelihood(const HogDescriptor& observed, std::span<const HogDescriptor> views) {
  double best = 0.0;
  for (const auto& view : views) {
    best = std::max(best, correlation_similarity(observed.values, view.values));
  }
  return best;
}

double vision_likelihood(const HogDescriptor& observed, const VoxelObject& hypothesis) {
  return vision_likelihood(observed, view_descriptors(hypothesis));
}

std::vector<std::uint8_t> encode_pgm(const Silhouette& s) {
  char header[64];
  const int len = std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", s.width, s.height);
  std::vector<std::uint8_t> out(header, header + len);
  for (double v : s.pixels) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

void write_pgm(const Silhouette& s, const std::filesystem::path& path) {
  io::write_file(path, encode_pgm(s));
}

void write_descriptor(const HogDescriptor& d, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  io::put_le(out, static_cast<std::uint32_t>(d.values.size()));
  for (float v : d.values) io::put_le(out, v);
  io::write_file(path, out);
}

HogDescriptor read_descriptor(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const auto n = io::get_le<std::uint32_t>(bytes, 0);
  if (bytes.size() != 4 + 4 * static_cast<std::size_t>(n)) {
    throw std::runtime_error("descriptor payload size mismatch in " + path.string());
  }
  HogDescriptor d;
  d.values.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) d.values.push_back(io::get_le<float>(bytes, 4 + 4 * i));
  return d;
}

}  // namespace fribble
