#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spultra/image.hpp"

namespace spultra {

/// Square patches of side x side pixels; only fully contained positions are used.
struct PatchConfig {
    std::size_t side = 8;
    std::size_t stride = 1;

    std::size_t v() const { return side * side; }
    /// Number of patch positions along an axis of length n.
    std::size_t positions(std::size_t n) const { return n < side ? 0 : (n - side) / stride + 1; }
    std::size_t count(GridDims d) const { return positions(d.rows) * positions(d.cols); }
    /// Throws ConfigError if the stride is outside [1, side] or the patch does not fit.
    void validate(GridDims d) const;
};

/// K square v x v sparsifying transforms.
struct TransformUnion {
    std::vector<Eigen::MatrixXd> transforms;

    std::size_t K() const { return transforms.size(); }
    std::size_t v() const { return transforms.empty() ? 0 : static_cast<std::size_t>(transforms.front().rows()); }
    /// Throws ConfigError on mismatched shapes or a singular transform.
    void validate() const;
};

/// Orthonormal 2D DCT-II acting on row-major vectorised side x side patches.
Eigen::MatrixXd dct2_matrix(std::size_t side);

/// File layout: "ULTR", u32 LE K, u32 LE v, then K*v*v float64 LE, row-major per transform.
void save_transforms(const TransformUnion& u, const std::filesystem::path& path);
TransformUnion load_transforms(const std::filesystem::path& path);

/// Per-patch sparse codes (columns of Z), class labels (0-based) and weights.
struct SparseState {
    Eigen::MatrixXd Z;
    std::vector<std::uint32_t> gamma;
    std::vector<double> tau;
};

/// v x N~ matrix; column j is the j-th patch (raster order of top-left corners),
/// vectorised row-major within the patch.
Eigen::MatrixXd extract_patches(const ImageGrid& img, const PatchConfig& cfg);

/// sum_j P_j^T cols_j, i.e. the adjoint of extract_patches.
ImageGrid accumulate_patches(const Eigen::MatrixXd& cols, GridDims dims, PixelSpacing spacing,
                             const PatchConfig& cfg);

/// Zero entries with |a| < gamma_c, keep the rest (|a| == gamma_c is kept).
Eigen::VectorXd hard_threshold(const Eigen::VectorXd& a, double gamma_c);

/// Per-entry contribution (a - z)^2 + gamma_c^2 [z != 0] summed over a column.
/// All regularizer values and clustering costs go through this so that they share
/// one floating-point evaluation order.
double code_cost(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& z,
                 double gamma_c);

/// tau_j = ||P_j kappa||_1 / v.
std::vector<double> patch_weights(const ImageGrid& kappa, const PatchConfig& cfg);

/// Joint clustering and hard-threshold sparse coding of every patch of x. Ties in
/// the class cost go to the smallest index.
SparseState sparse_code_and_cluster(const ImageGrid& x, const TransformUnion& u, double gamma_c,
                                    std::span<const double> tau, const PatchConfig& cfg);

struct ColumnCodes {
    Eigen::MatrixXd Z;
    std::vector<std::uint32_t> labels;
};

/// Same clustering and coding rule applied to explicit patch columns (tau = 1).
ColumnCodes sparse_code_columns(const Eigen::MatrixXd& patches, const TransformUnion& u, double gamma_c);

/// beta * sum_j tau_j (||Omega_{gamma_j} P_j x - z_j||^2 + gamma_c^2 ||z_j||_0).
double regularizer_value(const ImageGrid& x, const SparseState& s, const TransformUnion& u, double beta,
                         double gamma_c, const PatchConfig& cfg);

/// 2 beta sum_j tau_j P_j^T Omega^T (Omega P_j x - z_j) with (Z, gamma) held fixed.
ImageGrid regularizer_gradient(const ImageGrid& x, const SparseState& s, const TransformUnion& u, double beta,
                               const PatchConfig& cfg);

/// Largest eigenvalue of Omega^T Omega by power iteration (relative tolerance 1e-10).
double gram_spectral_norm(const Eigen::MatrixXd& omega);

/// 2 beta max_k ||Omega_k^T Omega_k||_2 sum_j tau_j P_j^T P_j, as an image.
ImageGrid regularizer_majorizer_diag(const TransformUnion& u, std::span<const double> tau, double beta,
                                     const PatchConfig& cfg, GridDims dims, PixelSpacing spacing = {});

/// Precomputed quantities for repeated gradient evaluations inside the image update.
class UltraRegularizer {
public:
    UltraRegularizer(const TransformUnion& u, const SparseState& s, double beta, const PatchConfig& cfg,
                     GridDims dims, PixelSpacing spacing);

    /// Writes the gradient at x into `grad`.
    void gradient(std::span<const double> x, std::span<double> grad) const;

private:
    const TransformUnion* union_;
    PatchConfig cfg_;
    GridDims dims_;
    PixelSpacing spacing_;
    double beta_;
    std::vector<Eigen::MatrixXd> gram_;                // Omega_k^T Omega_k
    std::vector<std::vector<std::size_t>> members_;    // patch indices per class
    std::vector<Eigen::MatrixXd> offset_;              // Omega_k^T Z_k per class, 2 beta tau scaled
    std::vector<std::vector<double>> member_tau_;
};

struct LearnOptions {
    std::size_t K = 1;
    double gamma_c = 1e-3;
    double lambda0 = 31e-3;
    std::size_t iters = 50;
    std::uint64_t seed = 0;
};

struct LearnResult {
    TransformUnion transforms;
    std::vector<std::uint32_t> labels;
    /// Objective after the initial coding and after each alternation (size iters + 1).
    std::vector<double> objective;
};

/// Learning objective sum_j [||Omega_{c_j} x_j - z_j||^2 + gamma_c^2 ||z_j||_0
///   + lambda0 ||x_j||^2 Q(Omega_{c_j})] with Q(Omega) = ||Omega||_F^2 - log|det Omega|.
double learning_objective(const Eigen::MatrixXd& patches, const TransformUnion& u,
                          const std::vector<std::uint32_t>& labels, const Eigen::MatrixXd& Z, double gamma_c,
                          double lambda0);

/// Closed-form minimiser of ||Omega X - Z||_F^2 + lambda (||Omega||_F^2 - log|det Omega|).
Eigen::MatrixXd transform_update(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda);

/// Alternating union-of-transforms learning. Transforms start at the 2D DCT and
/// clusters are drawn uniformly at random from a Philox stream seeded by `opts.seed`.
LearnResult learn_transforms(const Eigen::MatrixXd& patches, const LearnOptions& opts);

/// Same, starting from the given transforms (clusters still seeded at random).
LearnResult learn_transforms(const Eigen::MatrixXd& patches, const LearnOptions& opts, TransformUnion init);

} // namespace spultra
