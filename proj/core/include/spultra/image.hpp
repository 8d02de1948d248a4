#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spultra {

struct GridDims {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Pixel pitch in mm; dx along columns, dy along rows.
struct PixelSpacing {
    double dx = 1.0;
    double dy = 1.0;

    friend bool operator==(const PixelSpacing&, const PixelSpacing&) = default;
};

/// 2D attenuation map in mm^-1, row-major, row 0 at the top (largest y).
struct ImageGrid {
    GridDims dims;
    PixelSpacing spacing;
    std::vector<double> values;

    ImageGrid() = default;
    explicit ImageGrid(GridDims d, PixelSpacing s = {}, double fill = 0.0)
        : dims(d), spacing(s), values(d.size(), fill) {}

    std::size_t size() const { return values.size(); }
    double& operator()(std::size_t r, std::size_t c) { return values[r * dims.cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * dims.cols + c]; }

    std::span<double> span() { return values; }
    std::span<const double> span() const { return values; }
};

/// Per-ray measurement vector laid out view-major: index = view * n_detectors + detector.
struct Sinogram {
    std::size_t n_views = 0;
    std::size_t n_detectors = 0;
    std::vector<double> values;

    Sinogram() = default;
    Sinogram(std::size_t views, std::size_t detectors, double fill = 0.0)
        : n_views(views), n_detectors(detectors), values(views * detectors, fill) {}

    std::size_t size() const { return values.size(); }
    double& operator()(std::size_t v, std::size_t d) { return values[v * n_detectors + d]; }
    double operator()(std::size_t v, std::size_t d) const { return values[v * n_detectors + d]; }

    std::span<double> span() { return values; }
    std::span<const double> span() const { return values; }
};

} // namespace spultra
