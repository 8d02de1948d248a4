#include "spultra/ultra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "spultra/error.hpp"
#include "spultra/sim.hpp"

namespace spultra {

void PatchConfig::validate(GridDims d) const {
    if (side == 0 || stride == 0 || stride > side) {
        throw ConfigError("patch stride must lie in [1, patch side]");
    }
    if (side > d.rows || side > d.cols) {
        throw ConfigError("patch larger than image");
    }
}

void TransformUnion::validate() const {
    if (transforms.empty()) {
        throw ConfigError("transform union is empty");
    }
    const auto n = transforms.front().rows();
    for (const auto& t : transforms) {
        if (t.rows() != n || t.cols() != n) {
            throw ConfigError("transforms must all be square and of equal size");
        }
        if (!(std::abs(t.determinant()) > 0.0) || !t.allFinite()) {
            throw ConfigError("singular or non-finite transform");
        }
    }
}

Eigen::MatrixXd dct2_matrix(std::size_t side) {
    const auto n = static_cast<Eigen::Index>(side);
    Eigen::MatrixXd c(n, n);
    const double pi = 3.14159265358979323846;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            c(k, i) = scale * std::cos(pi * (2.0 * static_cast<double>(i) + 1.0) * static_cast<double>(k) /
                                       (2.0 * static_cast<double>(n)));
        }
    }
    Eigen::MatrixXd d(n * n, n * n);
    for (Eigen::Index k1 = 0; k1 < n; ++k1)
        for (Eigen::Index k2 = 0; k2 < n; ++k2)
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index q = 0; q < n; ++q) d(k1 * n + k2, r * n + q) = c(k1, r) * c(k2, q);
    return d;
}

void save_transforms(const TransformUnion& u, const std::filesystem::path& path) {
    u.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw ConfigError("cannot open " + path.string() + " for writing");
    }
    os.write("ULTR", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(u.K()));
    detail::put_u32(os, static_cast<std::uint32_t>(u.v()));
    for (const auto& t : u.transforms) {
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c) detail::put_f64(os, t(r, c));
    }
    if (!os) {
        throw ConfigError("failed writing " + path.string());
    }
}

TransformUnion load_transforms(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ConfigError("cannot open " + path.string());
    }
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "ULTR") {
        throw ConfigError(path.string() + ": not a transform-union file");
    }
    const std::uint32_t K = detail::get_u32(is);
    const std::uint32_t v = detail::get_u32(is);
    if (K == 0 || v == 0) {
        throw ConfigError(path.string() + ": empty transform union");
    }
    TransformUnion u;
    u.transforms.assign(K, Eigen::MatrixXd(v, v));
    for (auto& t : u.transforms) {
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = detail::get_f64(is);
    }
    u.validate();
    return u;
}

namespace {

// Copies patch j into a contiguous vector so every transform product sees the same
// memory layout regardless of the caller.
void load_patch(const ImageGrid& img, const PatchConfig& cfg, std::size_t j, Eigen::VectorXd& out) {
    const std::size_t per_row = cfg.positions(img.dims.cols);
    const std::size_t r0 = (j / per_row) * cfg.stride;
    const std::size_t c0 = (j % per_row) * cfg.stride;
    Eigen::Index k = 0;
    for (std::size_t r = 0; r < cfg.side; ++r) {
        const double* row = &img.values[(r0 + r) * img.dims.cols + c0];
        for (std::size_t c = 0; c < cfg.side; ++c) out[k++] = row[c];
    }
}

template <typename Fn>
void for_each_patch_pixel(GridDims dims, const PatchConfig& cfg, Fn&& fn) {
    const std::size_t pr = cfg.positions(dims.rows);
    const std::size_t pc = cfg.positions(dims.cols);
    std::size_t j = 0;
    for (std::size_t a = 0; a < pr; ++a) {
        for (std::size_t b = 0; b < pc; ++b, ++j) {
            std::size_t k = 0;
            for (std::size_t r = 0; r < cfg.side; ++r) {
                const std::size_t base = (a * cfg.stride + r) * dims.cols + b * cfg.stride;
                for (std::size_t c = 0; c < cfg.side; ++c, ++k) fn(j, k, base + c);
            }
        }
    }
}

// Cost of hard-thresholding a: sum over entries of min-cost choice, evaluated
// through the same per-entry expression as code_cost.
double threshold_cost(const Eigen::VectorXd& a, double gamma_c) {
    const double g2 = gamma_c * gamma_c;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (std::abs(a[i]) >= gamma_c) {
            const double d = a[i] - a[i];
            acc += d * d + g2;
        } else {
            acc += a[i] * a[i];
        }
    }
    return acc;
}

void check_state(const ImageGrid& x, const SparseState& s, const TransformUnion& u, const PatchConfig& cfg) {
    cfg.validate(x.dims);
    const std::size_t n = cfg.count(x.dims);
    if (static_cast<std::size_t>(s.Z.cols()) != n || static_cast<std::size_t>(s.Z.rows()) != cfg.v() ||
        s.gamma.size() != n || s.tau.size() != n) {
        throw ConfigError("sparse state does not match the patch configuration");
    }
    if (u.v() != cfg.v()) {
        throw ConfigError("transform size does not match the patch size");
    }
    for (auto k : s.gamma) {
        if (k >= u.K()) throw ConfigError("class label out of range");
    }
}

} // namespace

Eigen::MatrixXd extract_patches(const ImageGrid& img, const PatchConfig& cfg) {
    cfg.validate(img.dims);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(cfg.v()), static_cast<Eigen::Index>(cfg.count(img.dims)));
    for_each_patch_pixel(img.dims, cfg, [&](std::size_t j, std::size_t k, std::size_t pix) {
        out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = img.values[pix];
    });
    return out;
}

ImageGrid accumulate_patches(const Eigen::MatrixXd& cols, GridDims dims, PixelSpacing spacing,
                             const PatchConfig& cfg) {
    cfg.validate(dims);
    if (static_cast<std::size_t>(cols.rows()) != cfg.v() || static_cast<std::size_t>(cols.cols()) != cfg.count(dims)) {
        throw ConfigError("patch matrix does not match the patch configuration");
    }
    ImageGrid out(dims, spacing);
    for_each_patch_pixel(dims, cfg, [&](std::size_t j, std::size_t k, std::size_t pix) {
        out.values[pix] += cols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    });
    return out;
}

Eigen::VectorXd hard_threshold(const Eigen::VectorXd& a, double gamma_c) {
    Eigen::VectorXd z = a;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (std::abs(z[i]) < gamma_c) z[i] = 0.0;
    }
    return z;
}

double code_cost(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& z,
                 double gamma_c) {
    const double g2 = gamma_c * gamma_c;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double d = a[i] - z[i];
        acc += z[i] != 0.0 ? d * d + g2 : d * d;
    }
    return acc;
}

std::vector<double> patch_weights(const ImageGrid& kappa, const PatchConfig& cfg) {
    cfg.validate(kappa.dims);
    std::vector<double> tau(cfg.count(kappa.dims), 0.0);
    for_each_patch_pixel(kappa.dims, cfg,
                         [&](std::size_t j, std::size_t, std::size_t pix) { tau[j] += std::abs(kappa.values[pix]); });
    for (double& t : tau) t /= static_cast<double>(cfg.v());
    return tau;
}

SparseState sparse_code_and_cluster(const ImageGrid& x, const TransformUnion& u, double gamma_c,
                                    std::span<const double> tau, const PatchConfig& cfg) {
    cfg.validate(x.dims);
    if (u.v() != cfg.v()) {
        throw ConfigError("transform size does not match the patch size");
    }
    const std::size_t n = cfg.count(x.dims);
    if (tau.size() != n) {
        throw ConfigError("patch weight count does not match the patch configuration");
    }
    const auto v = static_cast<Eigen::Index>(cfg.v());
    SparseState s;
    s.Z.resize(v, static_cast<Eigen::Index>(n));
    s.gamma.assign(n, 0);
    s.tau.assign(tau.begin(), tau.end());

    Eigen::VectorXd patch(v), a(v);
    for (std::size_t j = 0; j < n; ++j) {
        load_patch(x, cfg, j, patch);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < u.K(); ++k) {
            a.noalias() = u.transforms[k] * patch;
            const double cost = threshold_cost(a, gamma_c);
            if (cost < best) {
                best = cost;
                s.gamma[j] = static_cast<std::uint32_t>(k);
                s.Z.col(static_cast<Eigen::Index>(j)) = hard_threshold(a, gamma_c);
            }
        }
    }
    return s;
}

double regularizer_value(const ImageGrid& x, const SparseState& s, const TransformUnion& u, double beta,
                         double gamma_c, const PatchConfig& cfg) {
    check_state(x, s, u, cfg);
    const auto v = static_cast<Eigen::Index>(cfg.v());
    Eigen::VectorXd patch(v), a(v);
    double total = 0.0;
    for (std::size_t j = 0; j < s.gamma.size(); ++j) {
        load_patch(x, cfg, j, patch);
        a.noalias() = u.transforms[s.gamma[j]] * patch;
        total += s.tau[j] * code_cost(a, s.Z.col(static_cast<Eigen::Index>(j)), gamma_c);
    }
    return beta * total;
}

UltraRegularizer::UltraRegularizer(const TransformUnion& u, const SparseState& s, double beta,
                                   const PatchConfig& cfg, GridDims dims, PixelSpacing spacing)
    : union_(&u), cfg_(cfg), dims_(dims), spacing_(spacing), beta_(beta) {
    cfg_.validate(dims_);
    const std::size_t n = cfg_.count(dims_);
    if (static_cast<std::size_t>(s.Z.cols()) != n || s.gamma.size() != n || s.tau.size() != n) {
        throw ConfigError("sparse state does not match the patch configuration");
    }
    gram_.reserve(u.K());
    for (const auto& t : u.transforms) gram_.push_back(t.transpose() * t);
    members_.resize(u.K());
    member_tau_.resize(u.K());
    for (std::size_t j = 0; j < n; ++j) {
        members_[s.gamma[j]].push_back(j);
        member_tau_[s.gamma[j]].push_back(2.0 * beta * s.tau[j]);
    }
    offset_.resize(u.K());
    const auto v = static_cast<Eigen::Index>(cfg_.v());
    for (std::size_t k = 0; k < u.K(); ++k) {
        Eigen::MatrixXd zk(v, static_cast<Eigen::Index>(members_[k].size()));
        for (std::size_t m = 0; m < members_[k].size(); ++m) {
            zk.col(static_cast<Eigen::Index>(m)) = s.Z.col(static_cast<Eigen::Index>(members_[k][m]));
        }
        offset_[k] = u.transforms[k].transpose() * zk;
    }
}

void UltraRegularizer::gradient(std::span<const double> x, std::span<double> grad) const {
    if (x.size() != dims_.size() || grad.size() != dims_.size()) {
        throw ConfigError("regularizer gradient: image size mismatch");
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    if (beta_ == 0.0) {
        return;
    }
    const std::size_t per_row = cfg_.positions(dims_.cols);
    const auto v = static_cast<Eigen::Index>(cfg_.v());
    for (std::size_t k = 0; k < members_.size(); ++k) {
        const auto& mem = members_[k];
        if (mem.empty()) continue;
        Eigen::MatrixXd xk(v, static_cast<Eigen::Index>(mem.size()));
        for (std::size_t m = 0; m < mem.size(); ++m) {
            const std::size_t r0 = (mem[m] / per_row) * cfg_.stride;
            const std::size_t c0 = (mem[m] % per_row) * cfg_.stride;
            double* col = xk.col(static_cast<Eigen::Index>(m)).data();
            for (std::size_t r = 0; r < cfg_.side; ++r)
                for (std::size_t c = 0; c < cfg_.side; ++c) *col++ = x[(r0 + r) * dims_.cols + c0 + c];
        }
        Eigen::MatrixXd res = gram_[k] * xk;
        res -= offset_[k];
        for (std::size_t m = 0; m < mem.size(); ++m) {
            const std::size_t r0 = (mem[m] / per_row) * cfg_.stride;
            const std::size_t c0 = (mem[m] % per_row) * cfg_.stride;
            const double w = member_tau_[k][m];
            const double* col = res.col(static_cast<Eigen::Index>(m)).data();
            for (std::size_t r = 0; r < cfg_.side; ++r)
                for (std::size_t c = 0; c < cfg_.side; ++c) grad[(r0 + r) * dims_.cols + c0 + c] += w * *col++;
        }
    }
}

ImageGrid regularizer_gradient(const ImageGrid& x, const SparseState& s, const TransformUnion& u, double beta,
                               const PatchConfig& cfg) {
    check_state(x, s, u, cfg);
    UltraRegularizer reg(u, s, beta, cfg, x.dims, x.spacing);
    ImageGrid g(x.dims, x.spacing);
    reg.gradient(x.values, g.values);
    return g;
}

double gram_spectral_norm(const Eigen::MatrixXd& omega) {
    const Eigen::MatrixXd gram = omega.transpose() * omega;
    const Eigen::Index n = gram.rows();
    Eigen::VectorXd q(n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
    q.normalize();
    double lambda = q.dot(gram * q);
    for (int it = 0; it < 200000; ++it) {
        Eigen::VectorXd next = gram * q;
        const double nn = next.norm();
        if (nn == 0.0) return 0.0;
        q = next / nn;
        const double updated = q.dot(gram * q);
        if (std::abs(updated - lambda) <= 1e-10 * std::abs(updated) && it > 2) {
            return updated;
        }
        lambda = updated;
    }
    return lambda;
}

ImageGrid regularizer_majorizer_diag(const TransformUnion& u, std::span<const double> tau, double beta,
                                     const PatchConfig& cfg, GridDims dims, PixelSpacing spacing) {
    cfg.validate(dims);
    if (tau.size() != cfg.count(dims)) {
        throw ConfigError("patch weight count does not match the patch configuration");
    }
    double norm = 0.0;
    for (const auto& t : u.transforms) norm = std::max(norm, gram_spectral_norm(t));
    ImageGrid d(dims, spacing);
    for_each_patch_pixel(dims, cfg, [&](std::size_t j, std::size_t, std::size_t pix) { d.values[pix] += tau[j]; });
    for (double& value : d.values) value *= 2.0 * beta * norm;
    return d;
}

namespace {

double transform_penalty(const Eigen::MatrixXd& omega) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(omega);
    double logdet = 0.0;
    const auto& m = lu.matrixLU();
    for (Eigen::Index i = 0; i < m.rows(); ++i) logdet += std::log(std::abs(m(i, i)));
    return omega.squaredNorm() - logdet;
}

// Cluster and code training columns under the per-patch learning cost.
void learn_code_step(const Eigen::MatrixXd& X, const TransformUnion& u, const std::vector<double>& penalty,
                     double gamma_c, double lambda0, std::vector<std::uint32_t>& labels, Eigen::MatrixXd& Z) {
    const Eigen::Index v = X.rows();
    Eigen::VectorXd a(v), patch(v);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        patch = X.col(j);
        const double energy = lambda0 * patch.squaredNorm();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < u.K(); ++k) {
            a.noalias() = u.transforms[k] * patch;
            const double cost = threshold_cost(a, gamma_c) + energy * penalty[k];
            if (cost < best) {
                best = cost;
                labels[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(k);
                Z.col(j) = hard_threshold(a, gamma_c);
            }
        }
    }
}

} // namespace

ColumnCodes sparse_code_columns(const Eigen::MatrixXd& patches, const TransformUnion& u, double gamma_c) {
    u.validate();
    if (u.v() != static_cast<std::size_t>(patches.rows())) {
        throw ConfigError("transform size does not match the patch length");
    }
    ColumnCodes out;
    out.labels.assign(static_cast<std::size_t>(patches.cols()), 0);
    out.Z.resize(patches.rows(), patches.cols());
    learn_code_step(patches, u, std::vector<double>(u.K(), 0.0), gamma_c, 0.0, out.labels, out.Z);
    return out;
}

double learning_objective(const Eigen::MatrixXd& patches, const TransformUnion& u,
                          const std::vector<std::uint32_t>& labels, const Eigen::MatrixXd& Z, double gamma_c,
                          double lambda0) {
    std::vector<double> penalty;
    for (const auto& t : u.transforms) penalty.push_back(transform_penalty(t));
    const Eigen::Index v = patches.rows();
    Eigen::VectorXd a(v), patch(v);
    double total = 0.0;
    for (Eigen::Index j = 0; j < patches.cols(); ++j) {
        patch = patches.col(j);
        const auto k = labels[static_cast<std::size_t>(j)];
        a.noalias() = u.transforms[k] * patch;
        total += code_cost(a, Z.col(j), gamma_c) + lambda0 * patch.squaredNorm() * penalty[k];
    }
    return total;
}

Eigen::MatrixXd transform_update(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double lambda) {
    const Eigen::Index v = X.rows();
    const Eigen::MatrixXd gram = X * X.transpose() + lambda * Eigen::MatrixXd::Identity(v, v);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd l_inv = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(l_inv * X * Z.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd s = svd.singularValues();
    const Eigen::VectorXd mid = 0.5 * (s + (s.cwiseProduct(s).array() + 2.0 * lambda).sqrt().matrix());
    return svd.matrixV() * mid.asDiagonal() * svd.matrixU().transpose() * l_inv;
}

LearnResult learn_transforms(const Eigen::MatrixXd& patches, const LearnOptions& opts) {
    if (opts.K == 0) {
        throw ConfigError("learning needs K >= 1");
    }
    const auto v = static_cast<std::size_t>(patches.rows());
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(v))));
    if (side * side != v) {
        throw ConfigError("patch length must be a perfect square");
    }
    TransformUnion init;
    init.transforms.assign(opts.K, dct2_matrix(side));
    return learn_transforms(patches, opts, std::move(init));
}

LearnResult learn_transforms(const Eigen::MatrixXd& patches, const LearnOptions& opts, TransformUnion init) {
    init.validate();
    if (init.v() != static_cast<std::size_t>(patches.rows())) {
        throw ConfigError("initial transforms do not match the patch length");
    }
    if (!patches.allFinite()) {
        throw ArgumentError("training patches must be finite");
    }
    if (init.K() != opts.K) {
        throw ConfigError("initial union size differs from K");
    }
    const Eigen::Index v = patches.rows();
    const auto n = static_cast<std::size_t>(patches.cols());

    LearnResult res;
    res.transforms = std::move(init);
    res.labels.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        RandomStream rs(opts.seed, static_cast<std::uint32_t>(StreamId::learning), j);
        res.labels[j] = static_cast<std::uint32_t>(rs.next_u64() % opts.K);
    }

    Eigen::MatrixXd Z(v, patches.cols());
    Eigen::VectorXd a(v), patch(v);
    for (Eigen::Index j = 0; j < patches.cols(); ++j) {
        patch = patches.col(j);
        a.noalias() = res.transforms.transforms[res.labels[static_cast<std::size_t>(j)]] * patch;
        Z.col(j) = hard_threshold(a, opts.gamma_c);
    }
    res.objective.push_back(learning_objective(patches, res.transforms, res.labels, Z, opts.gamma_c, opts.lambda0));

    for (std::size_t it = 0; it < opts.iters; ++it) {
        for (std::size_t k = 0; k < opts.K; ++k) {
            std::vector<Eigen::Index> cols;
            for (std::size_t j = 0; j < n; ++j) {
                if (res.labels[j] == k) cols.push_back(static_cast<Eigen::Index>(j));
            }
            if (cols.empty()) continue;
            Eigen::MatrixXd xk(v, static_cast<Eigen::Index>(cols.size()));
            Eigen::MatrixXd zk(v, static_cast<Eigen::Index>(cols.size()));
            for (std::size_t m = 0; m < cols.size(); ++m) {
                xk.col(static_cast<Eigen::Index>(m)) = patches.col(cols[m]);
                zk.col(static_cast<Eigen::Index>(m)) = Z.col(cols[m]);
            }
            const double lambda = opts.lambda0 * xk.squaredNorm();
            if (!(lambda > 0.0)) continue;
            res.transforms.transforms[k] = transform_update(xk, zk, lambda);
        }
        std::vector<double> penalty;
        for (const auto& t : res.transforms.transforms) penalty.push_back(transform_penalty(t));
        learn_code_step(patches, res.transforms, penalty, opts.gamma_c, opts.lambda0, res.labels, Z);
        res.objective.push_back(
            learning_objective(patches, res.transforms, res.labels, Z, opts.gamma_c, opts.lambda0));
    }
    return res;
}

} // namespace spultra
