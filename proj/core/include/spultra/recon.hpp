#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "spultra/geometry.hpp"
#include "spultra/image.hpp"
#include "spultra/metrics.hpp"
#include "spultra/spstats.hpp"
#include "spultra/ultra.hpp"

namespace spultra {

enum class PotentialKind { lange, hyperbola };

/// Edge-preserving potentials. Both satisfy phi(0) = 0, phi'(0) = 0 and phi'' <= 1.
double potential(PotentialKind kind, double t, double delta);
double potential_derivative(PotentialKind kind, double t, double delta);

struct EpConfig {
    double beta_ep = 0.0;
    double delta = 2e-4;  // mm^-1
    PotentialKind kind = PotentialKind::lange;
    std::size_t iters = 100;  // OS passes for PWLS-EP
};

struct ReconConfig {
    double beta = 0.0;
    double gamma_c = 1e-3;
    std::size_t N = 10;   // outer iterations
    std::size_t P = 4;    // inner passes per outer iteration
    std::size_t M = 1;    // ordered subsets
    double alpha = 1.999;
    double x_max = 0.1;   // mm^-1
    EpConfig ep;
    PatchConfig patch;

    /// Throws ConfigError on an invalid combination.
    void validate() const;
};

/// rho_0 = 1; rho_t = pi/(alpha(t+1)) sqrt(1 - (pi/(2 alpha (t+1)))^2).
double rho_schedule(std::size_t t, double alpha);

using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;

/// Quadratic image-update subproblem
///   min_{0 <= x <= x_max} 1/2 ||target - A x||^2_W + R(x),
/// with R entering through its gradient and a diagonal Hessian majorizer.
struct OsLalmProblem {
    const SystemMatrix* A = nullptr;
    const ViewSubsets* subsets = nullptr;
    std::span<const double> W;
    std::span<const double> target;
    std::span<const double> D_A;   // diag{A^T W A 1}
    std::span<const double> D_R;   // regularizer Hessian majorizer (may be all zero)
    GradientFn reg_gradient;       // may be empty when R == 0
    double alpha = 1.999;
    double x_max = 0.1;
};

struct OsLalmState {
    std::vector<double> x, s, g, zeta, eta;
    double rho = 1.0;
    std::size_t t = 0;
};

/// M A_m^T W_m (A_m x - target_m) for subset m.
void subset_gradient(const OsLalmProblem& prob, std::size_t subset, std::span<const double> x,
                     std::span<double> out);

/// Initialisation: zeta = g = gradient on the last subset, eta = D_A x - zeta.
OsLalmState os_lalm_init(const OsLalmProblem& prob, std::span<const double> x0);

/// One relaxed OS-LALM step on subset `subset` (advances t and rho).
/// Throws NumericalError naming the quantity that became non-finite.
void os_lalm_step(const OsLalmProblem& prob, OsLalmState& st, std::size_t subset);

/// P passes over all subsets starting from x0; returns the final image values.
std::vector<double> os_lalm_image_update(const OsLalmProblem& prob, std::span<const double> x0, std::size_t P);

struct TraceRow {
    std::size_t iter = 0;
    double objective = 0.0;
    double data_term = 0.0;
    double reg_term = 0.0;
    double step_norm = 0.0;
    std::optional<double> rmse_vs_truth;
    double wall_ms = 0.0;
    /// G(x^{n+1}, Z^n, Gamma^n): objective after the image update, before re-coding.
    double objective_before_coding = 0.0;
    /// phi(x^{n+1}; x^n) + Q_c^n; bounds the data term from above (SPULTRA only).
    std::optional<double> surrogate_bound;
    double min_x = 0.0;
    double max_x = 0.0;
};

struct ConvergenceTrace {
    std::vector<TraceRow> rows;
};

/// CSV columns: iter,objective,data_term,reg_term,step_norm,rmse_vs_truth,wall_ms.
void write_trace_csv(const ConvergenceTrace& trace, std::ostream& os);

/// Optional reference used to fill rmse_vs_truth (HU over the mask or the whole image).
struct TruthRef {
    const ImageGrid* truth = nullptr;
    const RoiMask* roi = nullptr;
    double mu_water = 0.02;
};

struct ReconResult {
    ImageGrid image;
    ConvergenceTrace trace;
    SparseState sparse;
};

/// G(x, Z, Gamma) = L(x) + R(x, Z, Gamma) with L on the shifted counts of y_raw.
double objective_value(const ImageGrid& x, const SparseState& s, std::span<const double> y_raw,
                       const SpModel& model, const TransformUnion& u, const ReconConfig& cfg,
                       const SystemMatrix& A);

/// Patch weights tau from kappa computed with the post-log statistical weights.
std::vector<double> ultra_patch_weights(const SystemMatrix& A, std::span<const double> w_tilde,
                                        const PatchConfig& cfg);

/// Shifted-Poisson likelihood with the ULTRA regularizer. When the run aborts,
/// NumericalError is thrown after `partial` (if given) receives the trace so far.
ReconResult spultra_reconstruct(std::span<const double> y_raw, const SpModel& model, const TransformUnion& u,
                                const SystemMatrix& A, const ReconConfig& cfg, const ImageGrid& x0,
                                const TruthRef& ref = {}, ConvergenceTrace* partial = nullptr);

/// Post-log weighted least squares with the ULTRA regularizer.
ReconResult pwls_ultra_reconstruct(std::span<const double> l_tilde, std::span<const double> w_tilde,
                                   const TransformUnion& u, const SystemMatrix& A, const ReconConfig& cfg,
                                   const ImageGrid& x0, const TruthRef& ref = {},
                                   ConvergenceTrace* partial = nullptr);

/// Post-log weighted least squares with the kappa-weighted 8-neighbour edge-preserving penalty.
ReconResult pwls_ep_reconstruct(std::span<const double> l_tilde, std::span<const double> w_tilde,
                                const SystemMatrix& A, const ReconConfig& cfg, const ImageGrid& x0,
                                const TruthRef& ref = {}, ConvergenceTrace* partial = nullptr);

/// beta_ep sum_j sum_{k in N_j} kappa_j kappa_k phi(x_j - x_k) and its gradient.
double ep_penalty(const ImageGrid& x, const ImageGrid& kappa, const EpConfig& ep);
ImageGrid ep_gradient(const ImageGrid& x, const ImageGrid& kappa, const EpConfig& ep);
/// 4 beta_ep sum_{k in N_j} kappa_j kappa_k, a diagonal majorizer of the penalty Hessian.
ImageGrid ep_majorizer_diag(const ImageGrid& kappa, const EpConfig& ep);

/// Parallel-beam filtered backprojection with the band-limited ramp kernel.
ImageGrid fbp_reconstruct(std::span<const double> l_tilde, const SystemGeometry& geom);

/// Clamp every pixel to [0, x_max].
void clip_to_box(std::span<double> x, double x_max);

} // namespace spultra
