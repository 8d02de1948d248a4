#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "spultra/geometry.hpp"
#include "spultra/image.hpp"

namespace spultra::testing {

inline SystemGeometry parallel_geometry(std::size_t rows, std::size_t cols, std::size_t views,
                                        std::size_t dets, double dx = 1.0, double ds = 1.0) {
    SystemGeometry g;
    g.beam_kind = BeamKind::parallel;
    g.image_dims = {rows, cols};
    g.pixel_spacing = {dx, dx};
    g.n_views = views;
    g.n_detectors = dets;
    g.detector_spacing = ds;
    return g;
}

inline SystemGeometry fan_geometry(std::size_t rows, std::size_t cols, std::size_t views, std::size_t dets,
                                   double dx = 1.0, double ds = 1.5) {
    SystemGeometry g = parallel_geometry(rows, cols, views, dets, dx, ds);
    g.beam_kind = BeamKind::fan;
    g.angular_range = 2.0 * 3.14159265358979323846;
    g.source_to_iso = 4.0 * static_cast<double>(std::max(rows, cols)) * dx;
    g.source_to_detector = 2.0 * g.source_to_iso;
    return g;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& e : v) e = u(rng);
    return v;
}

inline ImageGrid random_image(GridDims d, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0,
                              PixelSpacing s = {}) {
    ImageGrid img(d, s);
    img.values = random_vector(d.size(), rng, lo, hi);
    return img;
}

/// Dense A assembled column by column by projecting unit images.
inline Eigen::MatrixXd dense_from_columns(const SystemMatrix& A) {
    Eigen::MatrixXd D(A.n_rays(), A.n_pixels());
    std::vector<double> e(A.n_pixels(), 0.0), col(A.n_rays());
    for (std::size_t j = 0; j < A.n_pixels(); ++j) {
        e[j] = 1.0;
        A.forward(e, col);
        for (std::size_t i = 0; i < A.n_rays(); ++i) D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
        e[j] = 0.0;
    }
    return D;
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max(scale, std::abs(b[i]));
        diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    return scale > 0.0 ? diff / scale : diff;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    long double acc = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
    return static_cast<double>(acc);
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

} // namespace spultra::testing
