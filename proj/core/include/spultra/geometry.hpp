#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spultra/image.hpp"

namespace spultra {

enum class BeamKind { parallel, fan };

/// 2D scan geometry.
///
/// View v sits at angle theta_v = v * angular_range / n_views. For parallel beam
/// the ray of detector d is the line {p : p . (cos theta, sin theta) = u_d} with
/// u_d = (d - (n_detectors - 1) / 2) * detector_spacing, travelling along
/// (-sin theta, cos theta). For fan beam the source sits at -source_to_iso along
/// that direction and a flat detector is placed source_to_detector away from it.
struct SystemGeometry {
    BeamKind beam_kind = BeamKind::parallel;
    std::size_t n_detectors = 0;
    std::size_t n_views = 0;
    double detector_spacing = 1.0;  // mm
    double angular_range = 3.14159265358979323846;
    double source_to_iso = 0.0;       // mm, fan only
    double source_to_detector = 0.0;  // mm, fan only
    GridDims image_dims;
    PixelSpacing pixel_spacing;

    std::size_t n_rays() const { return n_detectors * n_views; }
    std::size_t n_pixels() const { return image_dims.size(); }
    double view_angle(std::size_t view) const;

    /// Throws ConfigError when a field violates its invariant.
    void validate() const;
};

/// One nonzero of the system matrix row belonging to a ray.
struct RayHit {
    std::uint32_t pixel;
    double length;  // mm
};

/// Exact intersection lengths of one ray with the pixel grid, in order of travel.
/// Rays that miss the image return an empty list.
std::vector<RayHit> trace_ray(const SystemGeometry& geom, std::size_t view, std::size_t detector);

/// Partition of the views into ordered subsets. Subset s holds the views
/// v with v mod M == order[s], where order is a bit-reversal permutation of 0..M-1.
class ViewSubsets {
public:
    ViewSubsets(std::size_t n_views, std::size_t n_subsets);

    std::size_t count() const { return subsets_.size(); }
    std::span<const std::size_t> views(std::size_t subset) const { return subsets_[subset]; }

private:
    std::vector<std::vector<std::size_t>> subsets_;
};

/// Sparse A stored row-wise (one row per ray). Forward and back projection share
/// the same weights, so the pair is an exact adjoint.
class SystemMatrix {
public:
    explicit SystemMatrix(const SystemGeometry& geom);

    const SystemGeometry& geometry() const { return geom_; }
    std::size_t n_rays() const { return geom_.n_rays(); }
    std::size_t n_pixels() const { return geom_.n_pixels(); }
    std::size_t nonzeros() const { return values_.size(); }

    void forward(std::span<const double> image, std::span<double> sino) const;
    void back(std::span<const double> sino, std::span<double> image) const;

    /// Projection restricted to the rays of the listed views. Rays outside the
    /// subset are left untouched in `sino`; back accumulates only subset rays.
    void forward_views(std::span<const std::size_t> views, std::span<const double> image,
                       std::span<double> sino) const;
    void back_views(std::span<const std::size_t> views, std::span<const double> sino,
                    std::span<double> image) const;

    /// Sum_j a_ij per ray (A 1).
    std::vector<double> row_sums() const;

    /// Row i as (pixel, length) pairs.
    std::span<const std::uint32_t> row_pixels(std::size_t ray) const;
    std::span<const double> row_lengths(std::size_t ray) const;

private:
    SystemGeometry geom_;
    std::vector<std::size_t> row_start_;
    std::vector<std::uint32_t> pixels_;
    std::vector<double> values_;
};

Sinogram forward_project(const ImageGrid& img, const SystemGeometry& geom);
Sinogram forward_project(const ImageGrid& img, const SystemMatrix& A);

ImageGrid back_project(const Sinogram& sino, const SystemGeometry& geom);
ImageGrid back_project(const Sinogram& sino, const SystemMatrix& A);

/// diag{A^T W A 1} as an image. Throws ArgumentError on a negative weight.
ImageGrid weighted_gram_diag(const SystemGeometry& geom, std::span<const double> w);
ImageGrid weighted_gram_diag(const SystemMatrix& A, std::span<const double> w);

/// kappa_j = sqrt(sum_i a_ij w_i / sum_i a_ij); zero where no ray crosses pixel j.
ImageGrid compute_kappa(const SystemGeometry& geom, std::span<const double> w);
ImageGrid compute_kappa(const SystemMatrix& A, std::span<const double> w);

} // namespace spultra
