#include "spultra/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "spultra/error.hpp"

namespace spultra {

namespace {

struct Segment {
    double x0, y0, x1, y1;
};

Segment ray_segment(const SystemGeometry& g, std::size_t view, std::size_t det) {
    const double theta = g.view_angle(view);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    // e: travel direction, n: detector axis
    const double ex = -s, ey = c;
    const double nx = c, ny = s;
    const double u = (static_cast<double>(det) - 0.5 * static_cast<double>(g.n_detectors - 1)) *
                     g.detector_spacing;

    if (g.beam_kind == BeamKind::parallel) {
        const double half_w = 0.5 * g.image_dims.cols * g.pixel_spacing.dx;
        const double half_h = 0.5 * g.image_dims.rows * g.pixel_spacing.dy;
        const double reach = std::hypot(half_w, half_h) + 1.0;
        const double cx = u * nx, cy = u * ny;
        return {cx - reach * ex, cy - reach * ey, cx + reach * ex, cy + reach * ey};
    }
    const double sx = -g.source_to_iso * ex, sy = -g.source_to_iso * ey;
    const double qx = sx + g.source_to_detector * ex + u * nx;
    const double qy = sy + g.source_to_detector * ey + u * ny;
    return {sx, sy, qx, qy};
}

// Parametric range [lo, hi] of the segment inside the slab [a, b] along one axis.
// Returns false if the segment misses the slab.
bool slab_range(double p0, double d, double a, double b, double& lo, double& hi) {
    if (d == 0.0) {
        if (p0 <= a || p0 >= b) {
            return false;
        }
        lo = -std::numeric_limits<double>::infinity();
        hi = std::numeric_limits<double>::infinity();
        return true;
    }
    const double t1 = (a - p0) / d;
    const double t2 = (b - p0) / d;
    lo = std::min(t1, t2);
    hi = std::max(t1, t2);
    return true;
}

void append_plane_crossings(double p0, double d, double origin, double pitch, std::size_t n_planes,
                            double lo, double hi, std::vector<double>& out) {
    if (d == 0.0) {
        return;
    }
    for (std::size_t k = 0; k <= n_planes; ++k) {
        const double t = (origin + static_cast<double>(k) * pitch - p0) / d;
        if (t > lo && t < hi) {
            out.push_back(t);
        }
    }
}

} // namespace

double SystemGeometry::view_angle(std::size_t view) const {
    return static_cast<double>(view) * angular_range / static_cast<double>(n_views);
}

void SystemGeometry::validate() const {
    std::ostringstream err;
    if (n_detectors == 0) err << "n_detectors must be positive; ";
    if (n_views == 0) err << "n_views must be positive; ";
    if (!(detector_spacing > 0.0)) err << "detector_spacing must be > 0; ";
    if (!(angular_range > 0.0)) err << "angular_range must be > 0; ";
    if (image_dims.rows == 0 || image_dims.cols == 0) err << "image_dims must be nonzero; ";
    if (!(pixel_spacing.dx > 0.0) || !(pixel_spacing.dy > 0.0)) err << "pixel_spacing must be > 0; ";
    if (image_dims.size() > std::numeric_limits<std::uint32_t>::max()) err << "image too large; ";
    if (beam_kind == BeamKind::fan) {
        if (!(source_to_iso > 0.0) || !(source_to_detector > source_to_iso)) {
            err << "fan beam needs source_to_detector > source_to_iso > 0; ";
        }
        const double half_diag = 0.5 * std::hypot(image_dims.cols * pixel_spacing.dx,
                                                  image_dims.rows * pixel_spacing.dy);
        if (source_to_iso <= half_diag) err << "source lies inside the image disk; ";
    }
    const std::string msg = err.str();
    if (!msg.empty()) {
        throw ConfigError("invalid geometry: " + msg.substr(0, msg.size() - 2));
    }
}

std::vector<RayHit> trace_ray(const SystemGeometry& g, std::size_t view, std::size_t det) {
    const Segment seg = ray_segment(g, view, det);
    const double dx = seg.x1 - seg.x0;
    const double dy = seg.y1 - seg.y0;
    const double length = std::hypot(dx, dy);

    const double xmin = -0.5 * g.image_dims.cols * g.pixel_spacing.dx;
    const double ymax = 0.5 * g.image_dims.rows * g.pixel_spacing.dy;
    const double xmax = -xmin;
    const double ymin = -ymax;

    double lo_x, hi_x, lo_y, hi_y;
    if (!slab_range(seg.x0, dx, xmin, xmax, lo_x, hi_x) ||
        !slab_range(seg.y0, dy, ymin, ymax, lo_y, hi_y)) {
        return {};
    }
    const double a_min = std::max({0.0, lo_x, lo_y});
    const double a_max = std::min({1.0, hi_x, hi_y});
    if (!(a_max > a_min)) {
        return {};
    }

    std::vector<double> alphas;
    alphas.reserve(g.image_dims.rows + g.image_dims.cols + 4);
    alphas.push_back(a_min);
    append_plane_crossings(seg.x0, dx, xmin, g.pixel_spacing.dx, g.image_dims.cols, a_min, a_max, alphas);
    append_plane_crossings(seg.y0, dy, ymin, g.pixel_spacing.dy, g.image_dims.rows, a_min, a_max, alphas);
    alphas.push_back(a_max);
    std::sort(alphas.begin(), alphas.end());

    std::vector<RayHit> hits;
    hits.reserve(alphas.size());
    const auto last_col = static_cast<long>(g.image_dims.cols) - 1;
    const auto last_row = static_cast<long>(g.image_dims.rows) - 1;
    for (std::size_t k = 1; k < alphas.size(); ++k) {
        const double seg_len = (alphas[k] - alphas[k - 1]) * length;
        if (seg_len <= 1e-12 * length) {
            continue;
        }
        const double mid = 0.5 * (alphas[k] + alphas[k - 1]);
        const double px = seg.x0 + mid * dx;
        const double py = seg.y0 + mid * dy;
        const long col = std::clamp(static_cast<long>(std::floor((px - xmin) / g.pixel_spacing.dx)), 0L, last_col);
        const long row = std::clamp(static_cast<long>(std::floor((ymax - py) / g.pixel_spacing.dy)), 0L, last_row);
        const auto pixel = static_cast<std::uint32_t>(row * static_cast<long>(g.image_dims.cols) + col);
        if (!hits.empty() && hits.back().pixel == pixel) {
            hits.back().length += seg_len;
        } else {
            hits.push_back({pixel, seg_len});
        }
    }
    return hits;
}

ViewSubsets::ViewSubsets(std::size_t n_views, std::size_t n_subsets) {
    if (n_subsets == 0 || n_subsets > n_views) {
        throw ConfigError("subset count must lie in [1, n_views]");
    }
    unsigned bits = 0;
    while ((std::size_t{1} << bits) < n_subsets) {
        ++bits;
    }
    auto reversed = [bits](std::size_t m) {
        std::size_t r = 0;
        for (unsigned b = 0; b < bits; ++b) {
            r |= ((m >> b) & 1U) << (bits - 1 - b);
        }
        return r;
    };
    std::vector<std::size_t> order(n_subsets);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return reversed(a) < reversed(b); });

    subsets_.resize(n_subsets);
    for (std::size_t s = 0; s < n_subsets; ++s) {
        for (std::size_t v = order[s]; v < n_views; v += n_subsets) {
            subsets_[s].push_back(v);
        }
    }
}

SystemMatrix::SystemMatrix(const SystemGeometry& geom) : geom_(geom) {
    geom_.validate();
    row_start_.reserve(geom_.n_rays() + 1);
    row_start_.push_back(0);
    for (std::size_t v = 0; v < geom_.n_views; ++v) {
        for (std::size_t d = 0; d < geom_.n_detectors; ++d) {
            for (const RayHit& h : trace_ray(geom_, v, d)) {
                pixels_.push_back(h.pixel);
                values_.push_back(h.length);
            }
            row_start_.push_back(values_.size());
        }
    }
    pixels_.shrink_to_fit();
    values_.shrink_to_fit();
}

void SystemMatrix::forward(std::span<const double> image, std::span<double> sino) const {
    if (image.size() != n_pixels() || sino.size() != n_rays()) {
        throw ConfigError("forward: image/sinogram size does not match geometry");
    }
    for (std::size_t i = 0; i < n_rays(); ++i) {
        double acc = 0.0;
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
            acc += values_[k] * image[pixels_[k]];
        }
        sino[i] = acc;
    }
}

void SystemMatrix::back(std::span<const double> sino, std::span<double> image) const {
    if (image.size() != n_pixels() || sino.size() != n_rays()) {
        throw ConfigError("back: image/sinogram size does not match geometry");
    }
    std::fill(image.begin(), image.end(), 0.0);
    for (std::size_t i = 0; i < n_rays(); ++i) {
        const double yi = sino[i];
        if (yi == 0.0) {
            continue;
        }
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
            image[pixels_[k]] += values_[k] * yi;
        }
    }
}

void SystemMatrix::forward_views(std::span<const std::size_t> views, std::span<const double> image,
                                 std::span<double> sino) const {
    if (image.size() != n_pixels() || sino.size() != n_rays()) {
        throw ConfigError("forward_views: image/sinogram size does not match geometry");
    }
    const std::size_t nd = geom_.n_detectors;
    for (std::size_t v : views) {
        for (std::size_t i = v * nd; i < (v + 1) * nd; ++i) {
            double acc = 0.0;
            for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
                acc += values_[k] * image[pixels_[k]];
            }
            sino[i] = acc;
        }
    }
}

void SystemMatrix::back_views(std::span<const std::size_t> views, std::span<const double> sino,
                              std::span<double> image) const {
    if (image.size() != n_pixels() || sino.size() != n_rays()) {
        throw ConfigError("back_views: image/sinogram size does not match geometry");
    }
    std::fill(image.begin(), image.end(), 0.0);
    const std::size_t nd = geom_.n_detectors;
    for (std::size_t v : views) {
        for (std::size_t i = v * nd; i < (v + 1) * nd; ++i) {
            const double yi = sino[i];
            if (yi == 0.0) {
                continue;
            }
            for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
                image[pixels_[k]] += values_[k] * yi;
            }
        }
    }
}

std::vector<double> SystemMatrix::row_sums() const {
    std::vector<double> sums(n_rays(), 0.0);
    for (std::size_t i = 0; i < n_rays(); ++i) {
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) {
            sums[i] += values_[k];
        }
    }
    return sums;
}

std::span<const std::uint32_t> SystemMatrix::row_pixels(std::size_t ray) const {
    return std::span<const std::uint32_t>(pixels_).subspan(row_start_[ray], row_start_[ray + 1] - row_start_[ray]);
}

std::span<const double> SystemMatrix::row_lengths(std::size_t ray) const {
    return std::span<const double>(values_).subspan(row_start_[ray], row_start_[ray + 1] - row_start_[ray]);
}

namespace {

void check_image(const ImageGrid& img, const SystemGeometry& g) {
    if (img.dims != g.image_dims || img.values.size() != g.n_pixels()) {
        throw ConfigError("image dimensions do not match geometry.image_dims");
    }
}

void check_sino(const Sinogram& s, const SystemGeometry& g) {
    if (s.values.size() != g.n_rays()) {
        throw ConfigError("sinogram length does not match n_views * n_detectors");
    }
}

void check_weights(std::span<const double> w, const SystemGeometry& g) {
    if (w.size() != g.n_rays()) {
        throw ConfigError("weight vector length does not match n_views * n_detectors");
    }
    for (double wi : w) {
        if (!(wi >= 0.0)) {
            throw ArgumentError("ray weights must be nonnegative");
        }
    }
}

} // namespace

Sinogram forward_project(const ImageGrid& img, const SystemMatrix& A) {
    const auto& g = A.geometry();
    check_image(img, g);
    Sinogram out(g.n_views, g.n_detectors);
    A.forward(img.values, out.values);
    return out;
}

Sinogram forward_project(const ImageGrid& img, const SystemGeometry& geom) {
    check_image(img, geom);
    return forward_project(img, SystemMatrix(geom));
}

ImageGrid back_project(const Sinogram& sino, const SystemMatrix& A) {
    const auto& g = A.geometry();
    check_sino(sino, g);
    ImageGrid out(g.image_dims, g.pixel_spacing);
    A.back(sino.values, out.values);
    return out;
}

ImageGrid back_project(const Sinogram& sino, const SystemGeometry& geom) {
    check_sino(sino, geom);
    return back_project(sino, SystemMatrix(geom));
}

ImageGrid weighted_gram_diag(const SystemMatrix& A, std::span<const double> w) {
    const auto& g = A.geometry();
    check_weights(w, g);
    std::vector<double> weighted = A.row_sums();
    for (std::size_t i = 0; i < weighted.size(); ++i) {
        weighted[i] *= w[i];
    }
    ImageGrid out(g.image_dims, g.pixel_spacing);
    A.back(weighted, out.values);
    return out;
}

ImageGrid weighted_gram_diag(const SystemGeometry& geom, std::span<const double> w) {
    check_weights(w, geom);
    return weighted_gram_diag(SystemMatrix(geom), w);
}

ImageGrid compute_kappa(const SystemMatrix& A, std::span<const double> w) {
    const auto& g = A.geometry();
    check_weights(w, g);
    ImageGrid num(g.image_dims, g.pixel_spacing);
    ImageGrid den(g.image_dims, g.pixel_spacing);
    A.back(w, num.values);
    const std::vector<double> ones(g.n_rays(), 1.0);
    A.back(ones, den.values);
    for (std::size_t j = 0; j < num.size(); ++j) {
        num.values[j] = den.values[j] > 0.0 ? std::sqrt(num.values[j] / den.values[j]) : 0.0;
    }
    return num;
}

ImageGrid compute_kappa(const SystemGeometry& geom, std::span<const double> w) {
    check_weights(w, geom);
    return compute_kappa(SystemMatrix(geom), w);
}

} // namespace spultra
