#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spultra/image.hpp"

namespace spultra {

/// N-dimensional float64 array in the SPIM container:
/// "SPIM", u32 version, u32 ndims, ndims x u32 dims, ndims x f64 spacing, payload
/// f64 row-major (last dimension fastest). All little-endian.
struct SpimArray {
    std::vector<std::uint32_t> dims;
    std::vector<double> spacing;
    std::vector<double> data;
};

inline constexpr std::uint32_t kSpimVersion = 1;

void write_spim(const std::filesystem::path& path, const SpimArray& a);
/// Throws MissingArtifactError if the file does not exist and ConfigError if it is malformed.
SpimArray read_spim(const std::filesystem::path& path);

/// Images are stored as (rows, cols) with spacing (dy, dx).
void save_image(const std::filesystem::path& path, const ImageGrid& img);
ImageGrid load_image(const std::filesystem::path& path);

/// Sinograms are stored as (views, detectors) with spacing (view step rad, detector mm).
void save_sinogram(const std::filesystem::path& path, const Sinogram& s, double view_step = 1.0,
                   double detector_spacing = 1.0);
Sinogram load_sinogram(const std::filesystem::path& path);

/// 16-bit binary PGM of the image in HU, linearly windowed to [lo, hi].
void write_pgm(const std::filesystem::path& path, const ImageGrid& img, double mu_water = 0.02,
               double lo = 800.0, double hi = 1200.0);

/// Lower-case hex SHA-256 of a file's bytes or of a string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

} // namespace spultra
