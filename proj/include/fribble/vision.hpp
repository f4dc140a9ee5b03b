#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "fribble/object_model.hpp"

namespace fribble {

// Grayscale image with values in [0, 1], row-major, row 0 at the top.
struct Silhouette {
  static constexpr int kSize = 128;

  int width = kSize;
  int height = kSize;
  std::vector<double> pixels = std::vector<double>(kSize * kSize, 0.0);

  Silhouette() = default;
  Silhouette(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0.0) {}

  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }

  bool operator==(const Silhouette&) const = default;
};

struct HogParams {
  int cell = 8;           // pixels per cell side
  int bins = 9;           // unsigned orientation bins over [0, 180)
  int block = 2;          // cells per block side; stride is one cell
  double epsilon = 1e-6;  // L2 block normalization: v / sqrt(|v|^2 + eps^2)
};

struct HogDescriptor {
  std::vector<float> values;

  bool operator==(const HogDescriptor&) const = default;
};

class EmptyObjectError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Silhouette side of the normalized bounding box's longer edge.
inline constexpr int kNormalizedExtent = 96;

// Orthographic silhouette along z of the object rotated to `vp`, translated
// so its centroid sits at the image center, rescaled so its bounding box's
// longer side spans kNormalizedExtent pixels, then 3x3 box-blurred.
Silhouette project(const VoxelObject& v, const Viewpoint& vp);

// Same pipeline on an already-rotated object.
Silhouette project_unrotated(const VoxelObject& v);

// Occupancy along z as an n x n mask, row-major, row = n - 1 - y.
std::vector<std::uint8_t> silhouette_mask(const VoxelObject& v);
// Centering, rescaling and blurring of a mask from silhouette_mask.
Silhouette silhouette_from_mask(std::span<const std::uint8_t> mask, int n);

HogDescriptor hog(const Silhouette& s, const HogParams& params = {});

// Descriptor length for an image of the given size.
std::size_t hog_length(int width, int height, const HogParams& params = {});

// max(0, Pearson correlation); 0 when either input has zero variance.
double correlation_similarity(std::span<const float> a, std::span<const float> b);

// One descriptor per grid viewpoint, in viewpoint_grid() order.
std::vector<HogDescriptor> view_descriptors(const VoxelObject& v);

// Best correlation of `observed` against any of the candidate views.
double vision_likelihood(const HogDescriptor& observed, std::span<const HogDescriptor> views);
double vision_likelihood(const HogDescriptor& observed, const VoxelObject& hypothesis);

// 8-bit binary PGM (P5).
void write_pgm(const Silhouette& s, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const Silhouette& s);

// u32 length, then little-endian f32 values.
void write_descriptor(const HogDescriptor& d, const std::filesystem::path& path);
HogDescriptor read_descriptor(const std::filesystem::path& path);

}  // namespace fribble
