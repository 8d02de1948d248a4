#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spultra/geometry.hpp"
#include "spultra/image.hpp"

namespace spultra {

/// Beam-hardening polynomial f(l) = s1 l + s2 l^2.
struct BeamHardening {
    double s1 = 1.0;
    double s2 = 0.0;

    double f(double l) const { return (s1 + s2 * l) * l; }
    double df(double l) const { return s1 + 2.0 * s2 * l; }
    double d2f() const { return 2.0 * s2; }

    /// Nonnegative root of s2 l^2 + s1 l - t = 0. Returns false when no real root exists.
    bool inverse(double t, double& l) const;
};

/// Shifted-Poisson measurement model  Y_i ~ Poisson{I0 exp(-f_i(l_i)) + sigma2}.
struct SpModel {
    double I0 = 1e4;
    double sigma2 = 25.0;
    BeamHardening bh;                      // shared coefficients
    std::vector<BeamHardening> per_ray_bh;  // overrides `bh` when nonempty

    const BeamHardening& coeffs(std::size_t ray) const {
        return per_ray_bh.empty() ? bh : per_ray_bh[ray];
    }
    /// Throws ArgumentError unless I0 > 0, sigma2 >= 0, s1 > 0.
    void validate() const;
};

/// Smallest mean admitted inside the log; rays that hit it are flagged.
inline constexpr double kMeanFloor = 1e-300;

/// Per-ray value, first and second derivative of h_i at l.
struct RayTerm {
    double h;
    double dh;
    double d2h;
    bool clamped;
};

RayTerm ray_term(double l, double Y, double I0, double sigma2, const BeamHardening& bh);

/// Shifted counts Y = max(y + sigma2, 0).
std::vector<double> shifted_counts(std::span<const double> y_raw, const SpModel& model);

/// L = sum_i h_i(l_i). Indices of rays whose mean hit kMeanFloor go to `flagged`.
double neg_log_likelihood(std::span<const double> l, std::span<const double> Y, const SpModel& model,
                          std::vector<std::size_t>* flagged = nullptr);

/// dh_i/dl at l_i for every ray.
std::vector<double> likelihood_gradient(std::span<const double> l, std::span<const double> Y,
                                        const SpModel& model, std::vector<std::size_t>* flagged = nullptr);

/// Curvature floor used for non-positive curvatures: 1e-12 * max_i c_i, or 1e-20 if all vanish.
double curvature_floor(std::span<const double> c);

/// Optimum curvatures c_i(l_i^n), capped by [h''_i(0)]_+ and floored so W is invertible.
std::vector<double> optimum_curvature(std::span<const double> l_n, std::span<const double> Y,
                                      const SpModel& model);

/// Single-ray optimum curvature with the [h''(0)]_+ cap applied but no floor; may be 0.
double ray_optimum_curvature(double l_n, double Y, double I0, double sigma2, const BeamHardening& bh);

/// Quadratic surrogate q(l; l_n) = h(l_n) + h'(l_n)(l - l_n) + c/2 (l - l_n)^2.
double surrogate_value(double l, double l_n, double h_n, double dh_n, double c);

struct SurrogateState {
    std::vector<double> W;        // curvature diagonal
    std::vector<double> d_h;      // h'_i(l_i^n)
    std::vector<double> y_tilde;  // l^n - d_h / W
    std::vector<double> l_n;      // A x^n
};

SurrogateState build_surrogate(const ImageGrid& x_n, std::span<const double> Y, const SpModel& model,
                               const SystemMatrix& A);

/// Constant Q_c = L(x^n) - 1/2 ||d_h||^2_{W^-1} so that L(x) <= 1/2||y~ - Ax||^2_W + Q_c.
double surrogate_constant(const SurrogateState& s, std::span<const double> Y, const SpModel& model);

/// 1/2 ||y~ - l||^2_W for a line-integral vector l.
double surrogate_quadratic(const SurrogateState& s, std::span<const double> l);

struct PostLogData {
    std::vector<double> l_tilde;       // beam-hardening corrected line integrals
    std::vector<double> w_tilde;       // statistical weights
    std::vector<std::size_t> flagged;  // rays with no real BH inverse
    std::size_t replaced = 0;          // count of non-positive inputs set to kNonPositiveFill
};

inline constexpr double kNonPositiveFill = 1e-5;

PostLogData post_log_convert(std::span<const double> y_raw, const SpModel& model);

} // namespace spultra
