#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spultra/image.hpp"

namespace spultra {

inline constexpr double kMuWater = 0.02;  // mm^-1

/// Boolean pixel mask with a label for reporting.
struct RoiMask {
    GridDims dims;
    std::vector<std::uint8_t> inside;
    std::string label;

    std::size_t count() const;
    /// Every pixel of the grid.
    static RoiMask full(GridDims dims, std::string label = "full");
    /// Pixels whose centres lie inside an axis-aligned ellipse (centre and semi-axes in mm).
    static RoiMask ellipse(GridDims dims, PixelSpacing spacing, double cx, double cy, double ax, double ay,
                           std::string label);
};

/// Shifted Hounsfield units: 1000 * mu / mu_water (air 0 HU, water 1000 HU).
ImageGrid to_hu(const ImageGrid& img, double mu_water = kMuWater);

/// RMSE in HU over the mask. Throws ArgumentError for an empty mask or mismatched shapes.
double rmse_roi(const ImageGrid& xhat, const ImageGrid& xtrue, const RoiMask& mask, double mu_water = kMuWater);

/// Mean SSIM over all fully contained window x window positions with
/// C1 = (0.01 L)^2 and C2 = (0.03 L)^2. L defaults to max - min of `xtrue`
/// (1 if that range is zero). Inputs are used in whatever units they come in.
double ssim(const ImageGrid& xhat, const ImageGrid& xtrue, std::size_t window = 8,
            std::optional<double> dynamic_range = std::nullopt);

struct RoiStats {
    double mean;  // HU
    double std;   // HU, population convention (divide by N)
};

RoiStats roi_stats(const ImageGrid& img, const RoiMask& mask, double mu_water = kMuWater);

enum class LineAxis { row, col };

/// Values along one row or column, in HU.
std::vector<double> line_profile(const ImageGrid& img, LineAxis axis, std::size_t index,
                                 double mu_water = kMuWater);

} // namespace spultra
