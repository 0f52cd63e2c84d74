#pragma once

#include "cae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cae {

enum class ManifoldKind { circle, sphere, torus, double_torus, genus3, cat_curve };

std::string_view to_string(ManifoldKind kind);
ManifoldKind parse_manifold_kind(std::string_view name);
// Dimension of the native embedding (2 for curves in the plane, 3 for surfaces).
std::size_t native_dim(ManifoldKind kind);
std::size_t intrinsic_dim(ManifoldKind kind);

struct ManifoldSpec {
  ManifoldKind kind = ManifoldKind::circle;
  std::size_t ambient_dim = 2;
  std::uint64_t embed_seed = 0;
  double noise_sigma = 0.0;
};

// Samples as rows. `params` holds ground-truth intrinsic coordinates where
// they are known analytically: angle for the circle, (polar, azimuth) for
// the sphere, (u, v) for the torus with major radius 2 and minor radius 1.
struct PointCloud {
  RowMatrix points;
  std::optional<std::size_t> intrinsic_dim;
  std::optional<RowMatrix> params;
  std::optional<std::vector<int>> labels;
  std::optional<ManifoldKind> kind;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t ambient_dim() const { return static_cast<std::size_t>(points.cols()); }
  PointCloud subset(const std::vector<std::size_t>& rows) const;
};

inline constexpr double kTorusMajor = 2.0;
inline constexpr double kTorusMinor = 1.0;

PointCloud sample(const ManifoldSpec& spec, std::size_t n, std::uint64_t rng_seed);

// Orthonormal columns mapping the native embedding into R^ambient_dim
// (ambient_dim x native_dim). Identity when the dimensions agree.
RowMatrix embedding_map(const ManifoldSpec& spec);

// Points of the closed "cat" spline at curve parameters t in [0, 1).
RowMatrix cat_curve_points(const Eigen::Ref<const Eigen::VectorXd>& t);

// Largest distance from a probe to its nearest point of X.
double delta_density(const PointCloud& X, const PointCloud& probes);

struct FpsResult {
  std::vector<std::size_t> indices;
  double min_dist = 0.0;  // covering radius of the selection over X
};

FpsResult farthest_point_sampling(const PointCloud& X, std::size_t count, std::size_t start = 0);

// IDX (MNIST) files.
class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxBadMagic : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncated : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxCountMismatch : public IdxError {
 public:
  using IdxError::IdxError;
};

// Reads an unsigned-byte image file (magic 0x00000803) and optional label
// file (magic 0x00000801). Pixels are scaled to [0, 1] when `normalize`.
PointCloud load_idx_images(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                           bool normalize);
void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::size_t count,
                      std::size_t rows, std::size_t cols);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

// CSV with header x0..x{m-1}[,p0..p{d-1}][,label].
void write_csv(const std::filesystem::path& path, const PointCloud& cloud);
std::string to_csv(const PointCloud& cloud);
PointCloud read_csv(const std::filesystem::path& path);

}  // namespace cae
