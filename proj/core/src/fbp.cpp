#include <cmath>
#include <complex>
#include <iostream>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "spultra/error.hpp"
#include "spultra/recon.hpp"

namespace spultra {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Spatial samples of the band-limited ramp (Ram-Lak) filter, wrapped for circular use.
std::vector<double> ramp_kernel(std::size_t nd, std::size_t nfft, double ds) {
    std::vector<double> h(nfft, 0.0);
    h[0] = 1.0 / (4.0 * ds * ds);
    for (std::size_t n = 1; n < nd; ++n) {
        if (n % 2 == 0) continue;
        const double v = -1.0 / (static_cast<double>(n * n) * kPi * kPi * ds * ds);
        h[n] = v;
        h[nfft - n] = v;
    }
    return h;
}

} // namespace

ImageGrid fbp_reconstruct(std::span<const double> l_tilde, const SystemGeometry& geom) {
    geom.validate();
    if (geom.beam_kind != BeamKind::parallel) {
        throw ConfigError("FBP supports parallel-beam geometry only");
    }
    if (l_tilde.size() != geom.n_rays()) {
        throw ConfigError("sinogram length does not match n_views * n_detectors");
    }
    if (geom.n_views < 8) {
        std::cerr << "warning: FBP with only " << geom.n_views << " views will show strong streaks\n";
    }
    const std::size_t nd = geom.n_detectors, nv = geom.n_views;
    const double ds = geom.detector_spacing;
    std::size_t nfft = 1;
    while (nfft < 2 * nd) nfft <<= 1;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> H, P;
    fft.fwd(H, ramp_kernel(nd, nfft, ds));

    std::vector<double> filtered(nv * nd);
    std::vector<double> row(nfft), out;
    for (std::size_t v = 0; v < nv; ++v) {
        std::fill(row.begin(), row.end(), 0.0);
        std::copy(l_tilde.begin() + static_cast<long>(v * nd), l_tilde.begin() + static_cast<long>((v + 1) * nd),
                  row.begin());
        fft.fwd(P, row);
        for (std::size_t k = 0; k < P.size(); ++k) P[k] *= H[k];
        fft.inv(out, P);
        for (std::size_t d = 0; d < nd; ++d) filtered[v * nd + d] = ds * out[d];
    }

    ImageGrid img(geom.image_dims, geom.pixel_spacing);
    const std::size_t rows = geom.image_dims.rows, cols = geom.image_dims.cols;
    const double c0 = 0.5 * (static_cast<double>(nd) - 1.0);
    for (std::size_t v = 0; v < nv; ++v) {
        const double th = geom.view_angle(v);
        const double ct = std::cos(th) / ds, st = std::sin(th) / ds;
        const double* q = filtered.data() + v * nd;
        for (std::size_t r = 0; r < rows; ++r) {
            const double y = (0.5 * (static_cast<double>(rows) - 1.0) - static_cast<double>(r)) *
                             geom.pixel_spacing.dy;
            for (std::size_t c = 0; c < cols; ++c) {
                const double x = (static_cast<double>(c) - 0.5 * (static_cast<double>(cols) - 1.0)) *
                                 geom.pixel_spacing.dx;
                const double t = x * ct + y * st + c0;
                const double fl = std::floor(t);
                const long i0 = static_cast<long>(fl);
                const double w = t - fl;
                double val = 0.0;
                if (i0 >= 0 && i0 < static_cast<long>(nd)) val += (1.0 - w) * q[i0];
                if (i0 + 1 >= 0 && i0 + 1 < static_cast<long>(nd)) val += w * q[i0 + 1];
                img.values[r * cols + c] += val;
            }
        }
    }
    const double scale = kPi / static_cast<double>(nv);
    for (double& e : img.values) e *= scale;
    return img;
}

} // namespace spultra
