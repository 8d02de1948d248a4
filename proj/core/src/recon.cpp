#include "spultra/recon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "spultra/error.hpp"

namespace spultra {

double potential(PotentialKind kind, double t, double delta) {
    const double s = std::abs(t / delta);
    if (kind == PotentialKind::lange) {
        return delta * delta * (s - std::log1p(s));
    }
    return delta * delta * (std::sqrt(1.0 + s * s) - 1.0);
}

double potential_derivative(PotentialKind kind, double t, double delta) {
    const double s = t / delta;
    if (kind == PotentialKind::lange) {
        return t / (1.0 + std::abs(s));
    }
    return t / std::sqrt(1.0 + s * s);
}

void ReconConfig::validate() const {
    std::ostringstream err;
    if (!(alpha >= 1.0 && alpha < 2.0)) err << "alpha must lie in [1, 2); ";
    if (P == 0) err << "P must be >= 1; ";
    if (M == 0) err << "M must be >= 1; ";
    if (!(x_max > 0.0)) err << "x_max must be > 0; ";
    if (!(beta >= 0.0)) err << "beta must be >= 0; ";
    if (!(gamma_c > 0.0)) err << "gamma_c must be > 0; ";
    if (!(ep.beta_ep >= 0.0)) err << "beta_ep must be >= 0; ";
    if (!(ep.delta > 0.0)) err << "delta must be > 0; ";
    const std::string msg = err.str();
    if (!msg.empty()) {
        throw ConfigError("invalid reconstruction config: " + msg.substr(0, msg.size() - 2));
    }
}

double rho_schedule(std::size_t t, double alpha) {
    if (t == 0) {
        return 1.0;
    }
    const double pi = 3.14159265358979323846;
    const double a = pi / (alpha * static_cast<double>(t + 1));
    return a * std::sqrt(1.0 - 0.25 * a * a);
}

void clip_to_box(std::span<double> x, double x_max) {
    for (double& v : x) v = std::clamp(v, 0.0, x_max);
}

namespace {

void require_finite(std::span<const double> v, const char* name, std::size_t t) {
    for (double e : v) {
        if (!std::isfinite(e)) {
            throw NumericalError(std::string("OS-LALM: non-finite value in ") + name + " at inner step " +
                                 std::to_string(t));
        }
    }
}

void check_problem(const OsLalmProblem& p) {
    if (p.A == nullptr || p.subsets == nullptr) {
        throw ConfigError("OS-LALM problem needs a system matrix and subsets");
    }
    const std::size_t nr = p.A->n_rays(), np = p.A->n_pixels();
    if (p.W.size() != nr || p.target.size() != nr || p.D_A.size() != np || p.D_R.size() != np) {
        throw ConfigError("OS-LALM problem vectors do not match the system matrix");
    }
}

} // namespace

void subset_gradient(const OsLalmProblem& prob, std::size_t subset, std::span<const double> x,
                     std::span<double> out) {
    const auto views = prob.subsets->views(subset);
    const std::size_t nd = prob.A->geometry().n_detectors;
    std::vector<double> r(prob.A->n_rays(), 0.0);
    prob.A->forward_views(views, x, r);
    for (std::size_t v : views) {
        for (std::size_t i = v * nd; i < (v + 1) * nd; ++i) {
            r[i] = prob.W[i] * (r[i] - prob.target[i]);
        }
    }
    prob.A->back_views(views, r, out);
    const auto scale = static_cast<double>(prob.subsets->count());
    for (double& e : out) e *= scale;
}

OsLalmState os_lalm_init(const OsLalmProblem& prob, std::span<const double> x0) {
    check_problem(prob);
    const std::size_t np = prob.A->n_pixels();
    if (x0.size() != np) {
        throw ConfigError("OS-LALM: initial image size mismatch");
    }
    OsLalmState st;
    st.x.assign(x0.begin(), x0.end());
    st.s.assign(np, 0.0);
    st.zeta.assign(np, 0.0);
    subset_gradient(prob, prob.subsets->count() - 1, st.x, st.zeta);
    st.g = st.zeta;
    st.eta.resize(np);
    for (std::size_t j = 0; j < np; ++j) st.eta[j] = prob.D_A[j] * st.x[j] - st.zeta[j];
    st.rho = rho_schedule(0, prob.alpha);
    st.t = 0;
    return st;
}

void os_lalm_step(const OsLalmProblem& prob, OsLalmState& st, std::size_t subset) {
    const std::size_t np = st.x.size();
    const double rho = st.rho;
    const double alpha = prob.alpha;

    for (std::size_t j = 0; j < np; ++j) {
        st.s[j] = rho * (prob.D_A[j] * st.x[j] - st.eta[j]) + (1.0 - rho) * st.g[j];
    }
    require_finite(st.s, "s", st.t);

    std::vector<double> reg(np, 0.0);
    if (prob.reg_gradient) {
        prob.reg_gradient(st.x, reg);
    }
    for (std::size_t j = 0; j < np; ++j) {
        const double denom = rho * prob.D_A[j] + prob.D_R[j];
        if (denom > 0.0) {
            st.x[j] = std::clamp(st.x[j] - (st.s[j] + reg[j]) / denom, 0.0, prob.x_max);
        }
    }
    require_finite(st.x, "x", st.t);

    subset_gradient(prob, subset, st.x, st.zeta);
    require_finite(st.zeta, "zeta", st.t);

    const double a = rho / (rho + 1.0);
    const double b = 1.0 / (rho + 1.0);
    for (std::size_t j = 0; j < np; ++j) {
        st.g[j] = a * (alpha * st.zeta[j] + (1.0 - alpha) * st.g[j]) + b * st.g[j];
        st.eta[j] = alpha * (prob.D_A[j] * st.x[j] - st.zeta[j]) + (1.0 - alpha) * st.eta[j];
    }
    require_finite(st.g, "g", st.t);
    require_finite(st.eta, "eta", st.t);

    ++st.t;
    st.rho = rho_schedule(st.t, alpha);
}

std::vector<double> os_lalm_image_update(const OsLalmProblem& prob, std::span<const double> x0, std::size_t P) {
    OsLalmState st = os_lalm_init(prob, x0);
    for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t m = 0; m < prob.subsets->count(); ++m) {
            os_lalm_step(prob, st, m);
        }
    }
    return std::move(st.x);
}

void write_trace_csv(const ConvergenceTrace& trace, std::ostream& os) {
    os << "iter,objective,data_term,reg_term,step_norm,rmse_vs_truth,wall_ms\n";
    os << std::setprecision(17);
    for (const auto& r : trace.rows) {
        os << r.iter << ',' << r.objective << ',' << r.data_term << ',' << r.reg_term << ',' << r.step_norm << ',';
        if (r.rmse_vs_truth) os << *r.rmse_vs_truth;
        os << ',' << std::setprecision(6) << std::fixed << r.wall_ms << std::defaultfloat << std::setprecision(17)
           << '\n';
    }
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double step_norm(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(acc);
}

std::optional<double> truth_rmse(const ImageGrid& x, const TruthRef& ref) {
    if (ref.truth == nullptr) return std::nullopt;
    const RoiMask full = RoiMask::full(x.dims);
    return rmse_roi(x, *ref.truth, ref.roi != nullptr ? *ref.roi : full, ref.mu_water);
}

void fill_box(TraceRow& row, std::span<const double> x) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    row.min_x = *lo;
    row.max_x = *hi;
}

double weighted_ls(std::span<const double> target, std::span<const double> l, std::span<const double> w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        const double r = target[i] - l[i];
        acc += w[i] * r * r;
    }
    return 0.5 * acc;
}

void check_start(const ImageGrid& x0, const SystemMatrix& A, const ReconConfig& cfg) {
    if (x0.dims != A.geometry().image_dims) {
        throw ConfigError("initial image does not match the geometry");
    }
    for (double v : x0.values) {
        if (!(v >= 0.0 && v <= cfg.x_max)) {
            throw ArgumentError("initial image must lie in [0, x_max]");
        }
    }
}

// Shared alternation for SPULTRA and PWLS-ULTRA.
struct UltraLoopInputs {
    bool shifted_poisson;
    std::span<const double> Y;          // SP only
    const SpModel* model;               // SP only
    std::span<const double> l_tilde;    // PWLS only
    std::span<const double> w_tilde;
};

ReconResult ultra_loop(const UltraLoopInputs& in, const TransformUnion& u, const SystemMatrix& A,
                       const ReconConfig& cfg, const ImageGrid& x0, const TruthRef& ref,
                       ConvergenceTrace* partial) {
    cfg.validate();
    u.validate();
    check_start(x0, A, cfg);
    const auto start = Clock::now();
    const GridDims dims = x0.dims;
    const PixelSpacing spacing = x0.spacing;

    const std::vector<double> tau = ultra_patch_weights(A, in.w_tilde, cfg.patch);
    const ImageGrid D_R = regularizer_majorizer_diag(u, tau, cfg.beta, cfg.patch, dims, spacing);
    const ViewSubsets subsets(A.geometry().n_views, cfg.M);

    ReconResult res;
    res.image = x0;
    res.sparse = sparse_code_and_cluster(res.image, u, cfg.gamma_c, tau, cfg.patch);

    std::vector<double> l(A.n_rays());
    A.forward(res.image.values, l);
    auto data_value = [&](std::span<const double> lv) {
        return in.shifted_poisson ? neg_log_likelihood(lv, in.Y, *in.model) : weighted_ls(in.l_tilde, lv, in.w_tilde);
    };

    ConvergenceTrace& trace = res.trace;
    auto flush = [&] {
        if (partial != nullptr) *partial = trace;
    };
    {
        TraceRow row;
        row.iter = 0;
        row.data_term = data_value(l);
        row.reg_term = regularizer_value(res.image, res.sparse, u, cfg.beta, cfg.gamma_c, cfg.patch);
        row.objective = row.data_term + row.reg_term;
        row.objective_before_coding = row.objective;
        row.rmse_vs_truth = truth_rmse(res.image, ref);
        row.wall_ms = elapsed_ms(start);
        fill_box(row, res.image.values);
        trace.rows.push_back(row);
    }

    // PWLS keeps W and the target fixed; SPULTRA rebuilds them around every iterate.
    ImageGrid D_A;
    if (!in.shifted_poisson) {
        D_A = weighted_gram_diag(A, in.w_tilde);
    }

    try {
        for (std::size_t n = 0; n < cfg.N; ++n) {
            SurrogateState surr;
            OsLalmProblem prob;
            prob.A = &A;
            prob.subsets = &subsets;
            if (in.shifted_poisson) {
                surr.l_n = l;
                surr.d_h = likelihood_gradient(l, in.Y, *in.model);
                surr.W = optimum_curvature(l, in.Y, *in.model);
                surr.y_tilde.resize(l.size());
                for (std::size_t i = 0; i < l.size(); ++i) surr.y_tilde[i] = l[i] - surr.d_h[i] / surr.W[i];
                D_A = weighted_gram_diag(A, surr.W);
                prob.W = surr.W;
                prob.target = surr.y_tilde;
            } else {
                prob.W = in.w_tilde;
                prob.target = in.l_tilde;
            }
            prob.D_A = D_A.values;
            prob.D_R = D_R.values;
            const UltraRegularizer reg(u, res.sparse, cfg.beta, cfg.patch, dims, spacing);
            prob.reg_gradient = [&reg](std::span<const double> x, std::span<double> g) { reg.gradient(x, g); };
            prob.alpha = cfg.alpha;
            prob.x_max = cfg.x_max;

            ImageGrid next(dims, spacing);
            next.values = os_lalm_image_update(prob, res.image.values, cfg.P);

            TraceRow row;
            row.iter = n + 1;
            A.forward(next.values, l);
            row.data_term = data_value(l);
            if (in.shifted_poisson) {
                row.surrogate_bound = surrogate_quadratic(surr, l) + surrogate_constant(surr, in.Y, *in.model);
            }
            row.objective_before_coding =
                row.data_term + regularizer_value(next, res.sparse, u, cfg.beta, cfg.gamma_c, cfg.patch);

            res.sparse = sparse_code_and_cluster(next, u, cfg.gamma_c, tau, cfg.patch);
            row.reg_term = regularizer_value(next, res.sparse, u, cfg.beta, cfg.gamma_c, cfg.patch);
            row.objective = row.data_term + row.reg_term;
            row.step_norm = step_norm(next.values, res.image.values);
            res.image = std::move(next);
            row.rmse_vs_truth = truth_rmse(res.image, ref);
            row.wall_ms = elapsed_ms(start);
            fill_box(row, res.image.values);
            trace.rows.push_back(row);
        }
    } catch (...) {
        flush();
        throw;
    }
    flush();
    return res;
}

constexpr int kNeighbours[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};

template <typename Fn>
void for_each_neighbour(GridDims d, Fn&& fn) {
    const auto rows = static_cast<long>(d.rows), cols = static_cast<long>(d.cols);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < cols; ++c) {
            const auto j = static_cast<std::size_t>(r * cols + c);
            for (const auto& off : kNeighbours) {
                const long rr = r + off[0], cc = c + off[1];
                if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                fn(j, static_cast<std::size_t>(rr * cols + cc));
            }
        }
    }
}

void check_kappa(const ImageGrid& x, const ImageGrid& kappa) {
    if (x.dims != kappa.dims) {
        throw ConfigError("kappa does not match the image");
    }
}

} // namespace

double ep_penalty(const ImageGrid& x, const ImageGrid& kappa, const EpConfig& ep) {
    check_kappa(x, kappa);
    double acc = 0.0;
    for_each_neighbour(x.dims, [&](std::size_t j, std::size_t k) {
        acc += kappa.values[j] * kappa.values[k] * potential(ep.kind, x.values[j] - x.values[k], ep.delta);
    });
    return ep.beta_ep * acc;
}

ImageGrid ep_gradient(const ImageGrid& x, const ImageGrid& kappa, const EpConfig& ep) {
    check_kappa(x, kappa);
    ImageGrid g(x.dims, x.spacing);
    for_each_neighbour(x.dims, [&](std::size_t j, std::size_t k) {
        g.values[j] += 2.0 * ep.beta_ep * kappa.values[j] * kappa.values[k] *
                       potential_derivative(ep.kind, x.values[j] - x.values[k], ep.delta);
    });
    return g;
}

ImageGrid ep_majorizer_diag(const ImageGrid& kappa, const EpConfig& ep) {
    ImageGrid d(kappa.dims, kappa.spacing);
    for_each_neighbour(kappa.dims, [&](std::size_t j, std::size_t k) {
        d.values[j] += 4.0 * ep.beta_ep * kappa.values[j] * kappa.values[k];
    });
    return d;
}

std::vector<double> ultra_patch_weights(const SystemMatrix& A, std::span<const double> w_tilde,
                                        const PatchConfig& cfg) {
    return patch_weights(compute_kappa(A, w_tilde), cfg);
}

double objective_value(const ImageGrid& x, const SparseState& s, std::span<const double> y_raw,
                       const SpModel& model, const TransformUnion& u, const ReconConfig& cfg,
                       const SystemMatrix& A) {
    const std::vector<double> Y = shifted_counts(y_raw, model);
    std::vector<double> l(A.n_rays());
    A.forward(x.values, l);
    return neg_log_likelihood(l, Y, model) + regularizer_value(x, s, u, cfg.beta, cfg.gamma_c, cfg.patch);
}

ReconResult spultra_reconstruct(std::span<const double> y_raw, const SpModel& model, const TransformUnion& u,
                                const SystemMatrix& A, const ReconConfig& cfg, const ImageGrid& x0,
                                const TruthRef& ref, ConvergenceTrace* partial) {
    model.validate();
    if (y_raw.size() != A.n_rays()) {
        throw ConfigError("measurement length does not match the geometry");
    }
    const std::vector<double> Y = shifted_counts(y_raw, model);
    const PostLogData post = post_log_convert(y_raw, model);
    UltraLoopInputs in{true, Y, &model, {}, post.w_tilde};
    return ultra_loop(in, u, A, cfg, x0, ref, partial);
}

ReconResult pwls_ultra_reconstruct(std::span<const double> l_tilde, std::span<const double> w_tilde,
                                   const TransformUnion& u, const SystemMatrix& A, const ReconConfig& cfg,
                                   const ImageGrid& x0, const TruthRef& ref, ConvergenceTrace* partial) {
    if (l_tilde.size() != A.n_rays() || w_tilde.size() != A.n_rays()) {
        throw ConfigError("post-log data length does not match the geometry");
    }
    UltraLoopInputs in{false, {}, nullptr, l_tilde, w_tilde};
    return ultra_loop(in, u, A, cfg, x0, ref, partial);
}

ReconResult pwls_ep_reconstruct(std::span<const double> l_tilde, std::span<const double> w_tilde,
                                const SystemMatrix& A, const ReconConfig& cfg, const ImageGrid& x0,
                                const TruthRef& ref, ConvergenceTrace* partial) {
    cfg.validate();
    check_start(x0, A, cfg);
    if (l_tilde.size() != A.n_rays() || w_tilde.size() != A.n_rays()) {
        throw ConfigError("post-log data length does not match the geometry");
    }
    const auto start = Clock::now();
    const ImageGrid kappa = compute_kappa(A, w_tilde);
    const ImageGrid D_A = weighted_gram_diag(A, w_tilde);
    const ImageGrid D_R = ep_majorizer_diag(kappa, cfg.ep);
    const ViewSubsets subsets(A.geometry().n_views, cfg.M);

    OsLalmProblem prob;
    prob.A = &A;
    prob.subsets = &subsets;
    prob.W = w_tilde;
    prob.target = l_tilde;
    prob.D_A = D_A.values;
    prob.D_R = D_R.values;
    ImageGrid scratch(x0.dims, x0.spacing);
    if (cfg.ep.beta_ep > 0.0) {
        prob.reg_gradient = [&](std::span<const double> x, std::span<double> g) {
            std::copy(x.begin(), x.end(), scratch.values.begin());
            const ImageGrid eg = ep_gradient(scratch, kappa, cfg.ep);
            std::copy(eg.values.begin(), eg.values.end(), g.begin());
        };
    }
    prob.alpha = cfg.alpha;
    prob.x_max = cfg.x_max;

    ReconResult res;
    res.image = x0;
    std::vector<double> l(A.n_rays());
    auto record = [&](std::size_t iter, double snorm) {
        A.forward(res.image.values, l);
        TraceRow row;
        row.iter = iter;
        row.data_term = weighted_ls(l_tilde, l, w_tilde);
        row.reg_term = ep_penalty(res.image, kappa, cfg.ep);
        row.objective = row.data_term + row.reg_term;
        row.objective_before_coding = row.objective;
        row.step_norm = snorm;
        row.rmse_vs_truth = truth_rmse(res.image, ref);
        row.wall_ms = elapsed_ms(start);
        fill_box(row, res.image.values);
        res.trace.rows.push_back(row);
    };
    record(0, 0.0);
    try {
        if (cfg.ep.iters > 0) {
            OsLalmState st = os_lalm_init(prob, res.image.values);
            for (std::size_t p = 0; p < cfg.ep.iters; ++p) {
                const std::vector<double> before = st.x;
                for (std::size_t m = 0; m < subsets.count(); ++m) os_lalm_step(prob, st, m);
                res.image.values = st.x;
                record(p + 1, step_norm(st.x, before));
            }
        }
    } catch (...) {
        if (partial != nullptr) *partial = res.trace;
        throw;
    }
    if (partial != nullptr) *partial = res.trace;
    return res;
}

} // namespace spultra
