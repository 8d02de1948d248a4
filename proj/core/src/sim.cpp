#include "spultra/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spultra/error.hpp"

namespace spultra {

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint64_t M0 = 0xD2511F53, M1 = 0xCD9E8D57;
    constexpr std::uint32_t W0 = 0x9E3779B9, W1 = 0xBB67AE85;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = M0 * ctr[0];
        const std::uint64_t p1 = M1 * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

void RngSpec::validate() const {
    if (generator != kRngAlgorithm) {
        throw ConfigError("unsupported random generator '" + generator + "' (expected philox4x32-10)");
    }
}

RandomStream::RandomStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t index)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      ctr_{0, stream, static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)} {}

std::uint32_t RandomStream::next_u32() {
    if (used_ == 4) {
        block_ = philox4x32_10(ctr_, key_);
        ++ctr_[0];
        used_ = 0;
    }
    return block_[used_++];
}

std::uint64_t RandomStream::next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
}

double RandomStream::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t RandomStream::poisson(double mean) {
    if (!(mean > 0.0)) {
        return 0;
    }
    if (mean < 10.0) {
        // Sequential inversion.
        const double u = uniform();
        double p = std::exp(-mean);
        double cdf = p;
        std::uint64_t k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cdf += p;
        }
        return k;
    }
    // Transformed rejection with squeeze (Hoermann's PTRS).
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double U = uniform() - 0.5;
        const double V = uniform();
        const double us = 0.5 - std::abs(U);
        const double k = std::floor((2.0 * a / us + b) * U + mean + 0.43);
        if (us >= 0.07 && V <= vr) {
            return static_cast<std::uint64_t>(k);
        }
        if (k < 0.0 || (us < 0.013 && V > us)) {
            continue;
        }
        if (std::log(V) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -mean + k * loglam - std::lgamma(k + 1.0)) {
            return static_cast<std::uint64_t>(k);
        }
    }
}

void PhantomSpec::validate() const {
    std::ostringstream err;
    if (dims.rows == 0 || dims.cols == 0) err << "phantom canvas must be non-empty; ";
    if (!(spacing.dx > 0.0 && spacing.dy > 0.0)) err << "phantom spacing must be > 0; ";
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const Ellipse& e = shapes[i];
        if (!(e.mu >= 0.0)) err << "shape " << i << " attenuation must be >= 0; ";
        if (!(e.ax > 0.0 && e.ay > 0.0)) err << "shape " << i << " semi-axes must be > 0; ";
    }
    const std::string msg = err.str();
    if (!msg.empty()) {
        throw ConfigError("invalid phantom: " + msg.substr(0, msg.size() - 2));
    }
}

ImageGrid make_phantom(const PhantomSpec& spec) {
    spec.validate();
    ImageGrid img(spec.dims, spec.spacing);
    const double xc = 0.5 * (static_cast<double>(spec.dims.cols) - 1.0);
    const double yc = 0.5 * (static_cast<double>(spec.dims.rows) - 1.0);
    for (const Ellipse& e : spec.shapes) {
        const double c = std::cos(e.rotation), s = std::sin(e.rotation);
        for (std::size_t r = 0; r < spec.dims.rows; ++r) {
            const double y = (yc - static_cast<double>(r)) * spec.spacing.dy - e.cy;
            for (std::size_t col = 0; col < spec.dims.cols; ++col) {
                const double x = (static_cast<double>(col) - xc) * spec.spacing.dx - e.cx;
                const double u = (x * c + y * s) / e.ax;
                const double v = (-x * s + y * c) / e.ay;
                if (u * u + v * v <= 1.0) {
                    img(r, col) = e.mu;
                }
            }
        }
    }
    return img;
}

namespace {

double half_fov(GridDims d, PixelSpacing s) {
    return 0.5 * std::min(static_cast<double>(d.cols) * s.dx, static_cast<double>(d.rows) * s.dy);
}

Ellipse scaled(double W, double cx, double cy, double ax, double ay, double rot, double mu) {
    return {cx * W, cy * W, ax * W, ay * W, rot, mu};
}

} // namespace

PhantomSpec water_disk_phantom(GridDims dims, PixelSpacing spacing, double mu_water) {
    const double W = half_fov(dims, spacing);
    return {dims, spacing, {scaled(W, 0.0, 0.0, 0.8, 0.8, 0.0, mu_water)}};
}

PhantomSpec four_ellipse_phantom(GridDims dims, PixelSpacing spacing) {
    const double W = half_fov(dims, spacing);
    return {dims,
            spacing,
            {scaled(W, 0.0, 0.0, 0.85, 0.65, 0.0, 0.02),
             scaled(W, -0.35, 0.1, 0.2, 0.3, 0.3, 0.005),
             scaled(W, 0.35, 0.1, 0.18, 0.25, -0.3, 0.024),
             scaled(W, 0.0, -0.4, 0.12, 0.1, 0.0, 0.04)}};
}

PhantomSpec thorax_phantom(GridDims dims, PixelSpacing spacing, int variant) {
    const double W = half_fov(dims, spacing);
    // Training variants shift and reshape the anatomy so they never coincide with the test object.
    const double k = static_cast<double>(variant);
    const double sx = 1.0 - 0.04 * std::sin(1.3 * k);
    const double sy = 1.0 + 0.05 * std::sin(0.7 * k + 0.4);
    const double dx = 0.03 * std::sin(2.1 * k), dy = 0.03 * std::cos(1.7 * k) - (variant == 0 ? 0.03 : 0.0);
    const double lung = 1.0 + 0.08 * std::cos(0.9 * k + 1.0) - (variant == 0 ? 0.08 * std::cos(1.0) : 0.0);

    PhantomSpec sp{dims, spacing, {}};
    auto add = [&](double cx, double cy, double ax, double ay, double rot, double mu) {
        sp.shapes.push_back(scaled(W, cx * sx + dx, cy * sy + dy, ax * sx, ay * sy, rot, mu));
    };
    add(0.0, 0.0, 0.88, 0.62, 0.0, 0.0190);     // fat / skin envelope
    add(0.0, 0.0, 0.82, 0.56, 0.0, 0.0205);     // muscle
    for (int i = 0; i < 12; ++i) {             // ribs
        const double a = 2.0 * 3.14159265358979323846 * (i + 0.5) / 12.0;
        add(0.76 * std::cos(a), 0.51 * std::sin(a), 0.04, 0.03, a, 0.036);
    }
    add(0.0, 0.0, 0.72, 0.48, 0.0, 0.0200);     // soft tissue
    add(-0.36, 0.04, 0.27 * lung, 0.38, 0.15, 0.0050);   // right lung
    add(0.38, 0.04, 0.25 * lung, 0.37, -0.15, 0.0050);   // left lung
    add(0.08, 0.02, 0.22, 0.19, 0.5, 0.0215);   // heart
    add(0.02, 0.06, 0.07, 0.07, 0.0, 0.0230);   // ventricle with contrast
    add(-0.08, -0.12, 0.06, 0.06, 0.0, 0.0225); // aorta
    add(-0.40, 0.15, 0.035, 0.035, 0.0, 0.020); // lung vessels / nodules
    add(-0.30, -0.10, 0.025, 0.025, 0.0, 0.020);
    add(0.42, 0.18, 0.03, 0.03, 0.0, 0.020);
    add(0.36, -0.12, 0.022, 0.022, 0.0, 0.021);
    add(0.0, -0.40, 0.10, 0.09, 0.0, 0.0400);   // vertebral body
    add(0.0, -0.40, 0.065, 0.055, 0.0, 0.0300); // marrow
    add(0.0, -0.53, 0.03, 0.04, 0.0, 0.0380);   // spinous process
    add(0.0, 0.50, 0.09, 0.03, 0.0, 0.0370);    // sternum
    return sp;
}

PhantomSpec phantom_preset(const std::string& name, GridDims dims, PixelSpacing spacing) {
    if (name == "water_disk") return water_disk_phantom(dims, spacing);
    if (name == "four_ellipse") return four_ellipse_phantom(dims, spacing);
    if (name == "thorax") return thorax_phantom(dims, spacing, 0);
    if (name == "thorax_train") return thorax_phantom(dims, spacing, 1);
    throw ConfigError("unknown phantom preset '" + name + "'");
}

double nonpositive_fraction(std::span<const double> y) {
    if (y.empty()) return 0.0;
    const auto n = std::count_if(y.begin(), y.end(), [](double v) { return v <= 0.0; });
    return static_cast<double>(n) / static_cast<double>(y.size());
}

SimOutput simulate_prelog(const ImageGrid& x_true, const SpModel& model, const SystemMatrix& A,
                          const RngSpec& rng, bool deterministic) {
    rng.validate();
    model.validate();
    if (x_true.values.size() != A.n_pixels()) {
        throw ConfigError("phantom does not match the geometry");
    }
    for (double v : x_true.values) {
        if (!(v >= 0.0)) throw ArgumentError("phantom must be non-negative");
    }
    const auto& g = A.geometry();
    SimOutput out;
    out.counts = Sinogram(g.n_views, g.n_detectors);
    std::vector<double> l(A.n_rays());
    A.forward(x_true.values, l);
    const double sigma = std::sqrt(model.sigma2);
    for (std::size_t i = 0; i < l.size(); ++i) {
        const double mean = model.I0 * std::exp(-model.coeffs(i).f(l[i]));
        if (deterministic) {
            out.counts.values[i] = mean;
            continue;
        }
        RandomStream rs(rng.seed, static_cast<std::uint32_t>(StreamId::prelog), i);
        out.counts.values[i] = static_cast<double>(rs.poisson(mean)) + sigma * rs.normal();
    }
    out.nonpositive_fraction = nonpositive_fraction(out.counts.values);
    return out;
}

SimOutput scale_dose(std::span<const double> y_standard, double alpha_scale, double sigma, const RngSpec& rng,
                     bool deterministic) {
    rng.validate();
    if (!(alpha_scale >= 1.0)) throw ArgumentError("dose scale factor must be >= 1");
    if (!(sigma >= 0.0)) throw ArgumentError("sigma must be >= 0");
    SimOutput out;
    out.counts.n_views = 1;
    out.counts.n_detectors = y_standard.size();
    out.counts.values.resize(y_standard.size());
    for (std::size_t i = 0; i < y_standard.size(); ++i) {
        if (!(y_standard[i] >= 0.0)) throw ArgumentError("standard-dose counts must be >= 0");
        const double mean = y_standard[i] / alpha_scale;
        if (deterministic) {
            out.counts.values[i] = mean;
            continue;
        }
        RandomStream rs(rng.seed, static_cast<std::uint32_t>(StreamId::dose), i);
        out.counts.values[i] = static_cast<double>(rs.poisson(mean)) + sigma * rs.normal();
    }
    out.nonpositive_fraction = nonpositive_fraction(out.counts.values);
    return out;
}

} // namespace spultra
