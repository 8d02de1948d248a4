#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spultra/geometry.hpp"
#include "spultra/image.hpp"
#include "spultra/spstats.hpp"

namespace spultra {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

inline constexpr const char* kRngAlgorithm = "philox4x32-10";

struct RngSpec {
    std::uint64_t seed = 0;
    std::string generator = kRngAlgorithm;
    /// Throws ConfigError for any generator other than philox4x32-10.
    void validate() const;
};

/// Independent stream for one (seed, stream, index) triple. Draws are consumed in
/// blocks of four 32-bit words.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t index);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform();
    double normal();
    std::uint64_t poisson(double mean);

private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> ctr_;
    std::array<std::uint32_t, 4> block_{};
    unsigned used_ = 4;
};

/// Stream identifiers so that distinct stages never share random numbers.
enum class StreamId : std::uint32_t { prelog = 1, dose = 2, learning = 3, test = 4 };

struct Ellipse {
    double cx = 0.0, cy = 0.0;   // mm
    double ax = 1.0, ay = 1.0;   // semi-axes, mm
    double rotation = 0.0;       // rad
    double mu = 0.0;             // mm^-1
};

struct PhantomSpec {
    GridDims dims;
    PixelSpacing spacing;
    std::vector<Ellipse> shapes;  // later shapes overwrite earlier ones
    void validate() const;
};

/// Pixel value = attenuation of the last ellipse covering the pixel centre, else 0.
ImageGrid make_phantom(const PhantomSpec& spec);

/// Bundled phantoms, scaled to the canvas field of view.
PhantomSpec water_disk_phantom(GridDims dims, PixelSpacing spacing, double mu_water = 0.02);
PhantomSpec four_ellipse_phantom(GridDims dims, PixelSpacing spacing);
/// Thorax-like body with soft tissue, lungs, spine and ribs. `variant` 0 is the
/// test object; other values give shifted/reshaped training objects.
PhantomSpec thorax_phantom(GridDims dims, PixelSpacing spacing, int variant = 0);
/// Lookup by name: water_disk, four_ellipse, thorax, thorax_train.
PhantomSpec phantom_preset(const std::string& name, GridDims dims, PixelSpacing spacing);

struct SimOutput {
    Sinogram counts;
    double nonpositive_fraction = 0.0;
};

/// y_i = Poisson{I0 exp(-f_i([Ax]_i))} + N(0, sigma2). In deterministic mode the
/// Poisson draw is replaced by its mean and no Gaussian noise is added.
SimOutput simulate_prelog(const ImageGrid& x_true, const SpModel& model, const SystemMatrix& A,
                          const RngSpec& rng, bool deterministic = false);

/// y_i = Poisson{y_std_i / alpha_scale} + N(0, sigma^2).
SimOutput scale_dose(std::span<const double> y_standard, double alpha_scale, double sigma, const RngSpec& rng,
                     bool deterministic = false);

/// count(y <= 0) / size; 0 for an empty input.
double nonpositive_fraction(std::span<const double> y);

} // namespace spultra
