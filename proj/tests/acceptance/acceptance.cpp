// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Usage: spultra_acceptance [criterion numbers...]   (default: all)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "spultra/geometry.hpp"
#include "spultra/io.hpp"
#include "spultra/metrics.hpp"
#include "spultra/pipeline.hpp"
#include "spultra/recon.hpp"
#include "spultra/sim.hpp"
#include "spultra/spstats.hpp"
#include "spultra/ultra.hpp"

using namespace spultra;
using namespace spultra::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string sci(double v) { return fmt("%.3g", v); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome timed(Outcome o, Clock::time_point t0, double limit_s) {
    const double s = seconds_since(t0);
    if (s > limit_s) {
        o.pass = false;
        o.detail += "; runtime " + fmt("%.1f", s) + " s exceeds " + fmt("%.0f", limit_s) + " s";
    }
    return o;
}

SystemGeometry square_geometry(std::size_t n, double dx, std::size_t views) {
    SystemGeometry g = parallel_geometry(n, n, views, static_cast<std::size_t>(std::ceil(n * std::sqrt(2.0))) + 4, dx, dx);
    return g;
}

// 1 ------------------------------------------------------------------------
Outcome adjoint_identity() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (const SystemGeometry& g : {parallel_geometry(48, 40, 60, 70, 1.0, 1.0), fan_geometry(40, 48, 60, 90, 1.0, 1.2)}) {
        const SystemMatrix A(g);
        for (int k = 0; k < 10; ++k) {
            const auto x = random_vector(A.n_pixels(), rng, -1.0, 1.0);
            const auto y = random_vector(A.n_rays(), rng, -1.0, 1.0);
            std::vector<double> ax(A.n_rays()), aty(A.n_pixels());
            A.forward(x, ax);
            A.back(y, aty);
            worst = std::max(worst, std::abs(dot(ax, y) - dot(x, aty)) / (norm2(ax) * norm2(y)));
        }
    }
    return timed({worst <= 1e-10, "20 pairs (parallel + fan), worst normalised gap " + sci(worst)}, t0, 1.0);
}

// 2 ------------------------------------------------------------------------
Outcome dense_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(102);
    double worst = 0.0;
    auto rel = [](const std::vector<double>& a, const Eigen::VectorXd& b) {
        return max_rel_diff(a, std::vector<double>(b.data(), b.data() + b.size()));
    };
    for (const SystemGeometry& g : {parallel_geometry(16, 16, 20, 25), fan_geometry(15, 17, 24, 31), parallel_geometry(9, 7, 11, 13, 1.3, 0.8)}) {
        if (g.n_pixels() > 256) return {false, "oracle system too large"};
        const SystemMatrix A(g);
        const Eigen::MatrixXd D = dense_from_columns(A);
        const auto x = random_vector(A.n_pixels(), rng);
        const auto y = random_vector(A.n_rays(), rng);
        const auto w = random_vector(A.n_rays(), rng, 0.0, 4.0);
        const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
        const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
        std::vector<double> ax(A.n_rays()), aty(A.n_pixels());
        A.forward(x, ax);
        A.back(y, aty);
        worst = std::max(worst, rel(ax, D * xv));
        worst = std::max(worst, rel(aty, D.transpose() * yv));
        const Eigen::VectorXd da = D.transpose() * (wv.asDiagonal() * (D * Eigen::VectorXd::Ones(D.cols())));
        worst = std::max(worst, rel(weighted_gram_diag(A, w).values, da));
        const Eigen::VectorXd num = D.transpose() * wv;
        const Eigen::VectorXd den = D.transpose() * Eigen::VectorXd::Ones(D.rows());
        Eigen::VectorXd kappa(D.cols());
        for (Eigen::Index j = 0; j < D.cols(); ++j) kappa[j] = den[j] > 0.0 ? std::sqrt(num[j] / den[j]) : 0.0;
        worst = std::max(worst, rel(compute_kappa(A, w).values, kappa));
    }
    return timed({worst <= 1e-12, "forward, back, D_A and kappa on 3 systems, worst rel diff " + sci(worst)}, t0, 5.0);
}

// 3 ------------------------------------------------------------------------
Outcome surrogate_majorization() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_gap = std::numeric_limits<double>::infinity(), worst_touch = 0.0;
    for (int k = 0; k < 200; ++k) {
        const double I0 = std::pow(10.0, 2.0 + 3.0 * u(rng));
        const double s2v = 100.0 * u(rng);
        const double ln = 8.0 * u(rng);
        const double Y = std::floor((I0 + s2v) * 1.2 * u(rng));
        const BeamHardening bh{1.0, 0.0};
        const RayTerm tn = ray_term(ln, Y, I0, s2v, bh);
        const double c = ray_optimum_curvature(ln, Y, I0, s2v, bh);
        for (int i = 0; i < 400; ++i) {
            const double l = 10.0 * i / 399.0;
            const double q = surrogate_value(l, ln, tn.h, tn.dh, c);
            worst_gap = std::min(worst_gap, q - ray_term(l, Y, I0, s2v, bh).h);
        }
        const double touch = std::abs(surrogate_value(ln, ln, tn.h, tn.dh, c) - tn.h) / (1.0 + std::abs(tn.h));
        worst_touch = std::max(worst_touch, touch);
    }
    const bool ok = worst_gap >= -1e-9 && worst_touch <= 1e-9;
    return timed({ok, "200 cases x 400 points, min q-h " + sci(worst_gap) + ", tangency " + sci(worst_touch)}, t0, 10.0);
}

// 4 ------------------------------------------------------------------------
Outcome gradient_checks() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(104);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_l = 0.0, worst_r = 0.0;
    for (int k = 0; k < 20; ++k) {
        SpModel m;
        m.I0 = std::pow(10.0, 2.0 + 3.0 * u(rng));
        m.sigma2 = 100.0 * u(rng);
        m.bh = {1.0, k % 2 ? 0.0 : 0.05 * u(rng)};
        const auto l = random_vector(64, rng, 0.0, 6.0);
        std::vector<double> Y(l.size());
        for (std::size_t i = 0; i < l.size(); ++i) Y[i] = std::floor((m.I0 * std::exp(-m.bh.f(l[i])) + m.sigma2) * (0.5 + u(rng)));
        const auto g = likelihood_gradient(l, Y, m);
        double gmax = 0.0, err = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            const double e = 1e-5;
            const std::vector<double> lp{l[i] + e}, lm{l[i] - e}, y1{Y[i]};
            const double fd = (neg_log_likelihood(lp, y1, m) - neg_log_likelihood(lm, y1, m)) / (2 * e);
            gmax = std::max(gmax, std::abs(g[i]));
            err = std::max(err, std::abs(fd - g[i]));
        }
        worst_l = std::max(worst_l, err / gmax);

        const PatchConfig cfg{4, 1 + static_cast<std::size_t>(k % 3)};
        TransformUnion un;
        for (int q = 0; q < 3; ++q) {
            Eigen::MatrixXd W = Eigen::MatrixXd::Identity(16, 16);
            for (Eigen::Index a = 0; a < W.size(); ++a) W.data()[a] += 0.3 * (u(rng) - 0.5);
            un.transforms.push_back(W);
        }
        const ImageGrid x = random_image({12, 13}, rng, 0.0, 0.05);
        const auto tau = random_vector(cfg.count(x.dims), rng, 0.2, 2.0);
        const SparseState s = sparse_code_and_cluster(x, un, 0.01, tau, cfg);
        const double beta = 1e3 * (0.5 + u(rng));
        const ImageGrid rg = regularizer_gradient(x, s, un, beta, cfg);
        double rmax = 0.0, rerr = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double e = 1e-6;
            ImageGrid xp = x, xm = x;
            xp.values[j] += e;
            xm.values[j] -= e;
            const double fd = (regularizer_value(xp, s, un, beta, 0.01, cfg) - regularizer_value(xm, s, un, beta, 0.01, cfg)) / (2 * e);
            rmax = std::max(rmax, std::abs(rg.values[j]));
            rerr = std::max(rerr, std::abs(fd - rg.values[j]));
        }
        worst_r = std::max(worst_r, rerr / rmax);
    }
    const bool ok = worst_l <= 1e-6 && worst_r <= 1e-6;
    return timed({ok, "20+20 instances, worst rel error likelihood " + sci(worst_l) + ", regularizer " + sci(worst_r)}, t0, 10.0);
}

// 5 ------------------------------------------------------------------------
Outcome rho_checks() {
    const double r1 = rho_schedule(1, 1.999);
    bool mono = true;
    for (std::size_t t = 1; t <= 1000; ++t) mono = mono && rho_schedule(t, 1.999) < rho_schedule(t - 1, 1.999) && rho_schedule(t, 1.999) > 0.0;
    const bool ok = rho_schedule(0, 1.999) == 1.0 && std::abs(r1 - 0.72260) <= 1e-4 && mono;
    return {ok, "rho_0 = " + sci(rho_schedule(0, 1.999)) + ", rho_1 = " + fmt("%.6f", r1) + (mono ? ", decreasing to t=1000" : ", NOT monotone")};
}

// 6 ------------------------------------------------------------------------
Outcome coding_exactness() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(106);
    std::normal_distribution<double> n(0.0, 1.0);
    std::size_t mismatches = 0, total = 0;
    for (Eigen::Index v : {4, 6}) {
        TransformUnion un;
        for (int k = 0; k < 3; ++k) {
            Eigen::MatrixXd W(v, v);
            for (Eigen::Index a = 0; a < W.size(); ++a) W.data()[a] = n(rng);
            un.transforms.push_back(W);
        }
        Eigen::MatrixXd X(v, 100);
        for (Eigen::Index a = 0; a < X.size(); ++a) X.data()[a] = n(rng);
        const double g = 0.7;
        const ColumnCodes codes = sparse_code_columns(X, un, g);
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t bk = 0;
            Eigen::VectorXd bz;
            for (std::size_t k = 0; k < 3; ++k) {
                const Eigen::VectorXd a = un.transforms[k] * X.col(j);
                for (unsigned mask = 0; mask < (1u << v); ++mask) {
                    Eigen::VectorXd z = Eigen::VectorXd::Zero(v);
                    double cost = 0.0;
                    for (Eigen::Index i = 0; i < v; ++i) {
                        if (mask & (1u << i)) {
                            z[i] = a[i];
                            cost += g * g;
                        } else {
                            cost += a[i] * a[i];
                        }
                    }
                    if (cost < best) {
                        best = cost;
                        bk = static_cast<std::uint32_t>(k);
                        bz = z;
                    }
                }
            }
            ++total;
            if (codes.labels[static_cast<std::size_t>(j)] != bk || codes.Z.col(j) != bz) ++mismatches;
        }
    }
    return timed({mismatches == 0, std::to_string(total - mismatches) + "/" + std::to_string(total) +
                                       " patches (v = 4, 6; K = 3) equal exhaustive search"},
                 t0, 30.0);
}

// 7 and 8 -------------------------------------------------------------------
struct MonotoneRun {
    ReconResult result;
    double seconds = 0.0;
    double x_max = 0.0;
};

const MonotoneRun& monotone_run() {
    static std::optional<MonotoneRun> cache;
    if (cache) return *cache;
    const auto t0 = Clock::now();
    const SystemGeometry g = square_geometry(64, 2.0, 180);
    const SystemMatrix A(g);
    const ImageGrid truth = make_phantom(four_ellipse_phantom(g.image_dims, g.pixel_spacing));
    SpModel m;
    m.I0 = 3e3;
    m.sigma2 = 25.0;
    const SimOutput sim = simulate_prelog(truth, m, A, RngSpec{7});
    const PostLogData post = post_log_convert(sim.counts.values, m);

    ReconConfig cfg;
    cfg.beta = 3e3;
    cfg.gamma_c = 2e-3;
    cfg.N = 50;
    cfg.P = 4;
    cfg.M = 6;
    cfg.patch = {8, 2};
    ImageGrid x0 = fbp_reconstruct(post.l_tilde, g);
    clip_to_box(x0.values, cfg.x_max);

    const ImageGrid train = make_phantom(thorax_phantom(g.image_dims, g.pixel_spacing, 1));
    LearnOptions lo;
    lo.K = 3;
    lo.gamma_c = cfg.gamma_c;
    lo.iters = 30;
    lo.seed = 1;
    const LearnResult lr = learn_transforms(extract_patches(train, {8, 1}), lo);
    const RoiMask roi = evaluation_roi(truth, "body");
    cache = MonotoneRun{spultra_reconstruct(sim.counts.values, m, lr.transforms, A, cfg, x0, TruthRef{&truth, &roi, kMuWater}),
                        seconds_since(t0), cfg.x_max};
    return *cache;
}

Outcome monotone_objective() {
    const MonotoneRun& run = monotone_run();
    const auto& rows = run.result.trace.rows;
    double worst_rel = -std::numeric_limits<double>::infinity(), worst_coding = -std::numeric_limits<double>::infinity();
    bool box = true;
    for (std::size_t n = 1; n < rows.size(); ++n) {
        worst_rel = std::max(worst_rel, (rows[n].objective - rows[n - 1].objective) / std::abs(rows[n - 1].objective));
        worst_coding = std::max(worst_coding, rows[n].objective - rows[n].objective_before_coding);
        box = box && rows[n].min_x >= 0.0 && rows[n].max_x <= run.x_max;
    }
    const bool ok = rows.size() == 51 && worst_rel <= 1e-6 && worst_coding <= 0.0 && box;
    Outcome o{ok, "50 outer iterations, max relative G increase " + sci(worst_rel) + ", max coding-step change " +
                      sci(worst_coding) + (box ? ", box respected" : ", BOX VIOLATED") + ", final RMSE " +
                      fmt("%.1f", rows.back().rmse_vs_truth.value_or(-1.0)) + " HU"};
    o.detail += "; runtime " + fmt("%.1f", run.seconds) + " s";
    if (run.seconds > 180.0) o.pass = false;
    return o;
}

Outcome step_decay() {
    const auto& rows = monotone_run().result.trace.rows;
    if (rows.size() < 51) return {false, "trace too short"};
    const double s1 = rows[1].step_norm, s50 = rows[50].step_norm;
    return {s50 <= 0.05 * s1, "step_norm n=1 " + sci(s1) + ", n=50 " + sci(s50) + ", ratio " + sci(s50 / s1)};
}

// 9 ------------------------------------------------------------------------
Outcome table_trend() {
    const auto t0 = Clock::now();
    const SystemGeometry g = square_geometry(128, 3.0, 360);
    const SystemMatrix A(g);
    const ImageGrid truth = make_phantom(thorax_phantom(g.image_dims, g.pixel_spacing, 0));
    SpModel m;
    m.I0 = 2e3;
    m.sigma2 = 25.0;
    const SimOutput sim = simulate_prelog(truth, m, A, RngSpec{42});
    const PostLogData post = post_log_convert(sim.counts.values, m);
    const RoiMask roi = evaluation_roi(truth, "body");

    ReconConfig cfg;
    cfg.beta = 3e3;
    cfg.gamma_c = 3e-3;
    cfg.N = 200;
    cfg.P = 4;
    cfg.M = 12;
    cfg.patch = {8, 2};
    cfg.ep.beta_ep = 1e3;
    cfg.ep.delta = 2e-3;
    cfg.ep.iters = 50;

    ImageGrid x0 = fbp_reconstruct(post.l_tilde, g);
    clip_to_box(x0.values, cfg.x_max);
    const ReconResult ep = pwls_ep_reconstruct(post.l_tilde, post.w_tilde, A, cfg, x0);

    const ImageGrid train = make_phantom(thorax_phantom(g.image_dims, g.pixel_spacing, 1));
    LearnOptions lo;
    lo.K = 5;
    lo.gamma_c = cfg.gamma_c;
    lo.iters = 50;
    lo.seed = 1;
    const LearnResult lr = learn_transforms(extract_patches(train, {8, 1}), lo);

    const ReconResult pw = pwls_ultra_reconstruct(post.l_tilde, post.w_tilde, lr.transforms, A, cfg, ep.image);
    const ReconResult sp = spultra_reconstruct(sim.counts.values, m, lr.transforms, A, cfg, ep.image);
    const double r_ep = rmse_roi(ep.image, truth, roi), r_pw = rmse_roi(pw.image, truth, roi),
                 r_sp = rmse_roi(sp.image, truth, roi);
    const bool ok = r_sp <= r_pw && r_pw <= r_ep && (r_pw - r_sp) > 0.5;
    return timed({ok, "RMSE HU: PWLS-EP " + fmt("%.2f", r_ep) + ", PWLS-ULTRA " + fmt("%.2f", r_pw) + ", SPULTRA " +
                          fmt("%.2f", r_sp) + " (non-positive " + fmt("%.2f", 100.0 * sim.nonpositive_fraction) + "%)"},
                 t0, 900.0);
}

// 10 -----------------------------------------------------------------------
Outcome dose_trend() {
    const SystemGeometry g = square_geometry(128, 3.25, 180);
    const SystemMatrix A(g);
    const ImageGrid disk = make_phantom(water_disk_phantom(g.image_dims, g.pixel_spacing));
    std::string detail = "non-positive %:";
    double prev = -1.0;
    bool ok = true;
    for (double I0 : {1e4, 5e3, 3e3, 2e3}) {
        SpModel m;
        m.I0 = I0;
        m.sigma2 = 25.0;
        const double f = simulate_prelog(disk, m, A, RngSpec{11}).nonpositive_fraction;
        detail += " " + fmt("%.3f", 100.0 * f);
        ok = ok && f > prev;
        prev = f;
    }
    return {ok, detail + " for I0 = 1e4, 5e3, 3e3, 2e3"};
}

// 11 -----------------------------------------------------------------------
Outcome learning_checks() {
    const auto t0 = Clock::now();
    // 10^4 patches at random positions of a noisy training image
    const GridDims d{128, 128};
    const ImageGrid train = make_phantom(thorax_phantom(d, {3.0, 3.0}, 1));
    RandomStream rs(2024, static_cast<std::uint32_t>(StreamId::test), 0);
    Eigen::MatrixXd X(64, 10000);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const std::size_t r0 = rs.next_u32() % (d.rows - 7), c0 = rs.next_u32() % (d.cols - 7);
        for (std::size_t i = 0; i < 64; ++i) X(static_cast<Eigen::Index>(i), j) = train(r0 + i / 8, c0 + i % 8) + 1e-3 * rs.normal();
    }
    LearnOptions lo;
    lo.K = 5;
    lo.gamma_c = 2e-3;
    lo.iters = 50;
    lo.seed = 3;
    const LearnResult r = learn_transforms(X, lo);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < r.objective.size(); ++i) worst = std::max(worst, r.objective[i] - r.objective[i - 1]);
    double min_det = std::numeric_limits<double>::infinity();
    for (const auto& t : r.transforms.transforms) min_det = std::min(min_det, std::abs(t.determinant()));
    const bool ok = r.objective.size() == 51 && worst <= 0.0 && min_det > 1e-12;
    return timed({ok, "objective " + sci(r.objective.front()) + " -> " + sci(r.objective.back()) + ", max step change " +
                          sci(worst) + ", min |det| " + sci(min_det)},
                 t0, 60.0);
}

// 12 -----------------------------------------------------------------------
Outcome metric_checks() {
    std::mt19937_64 rng(112);
    const ImageGrid a = random_image({16, 16}, rng, 0.0, 0.04);
    const ImageGrid b = random_image({16, 16}, rng, 0.0, 0.04);
    ImageGrid w({1, 1});
    w.values[0] = kMuWater;
    // windowed oracle, two-pass statistics in long double
    const auto [lo, hi] = std::minmax_element(b.values.begin(), b.values.end());
    const long double L = *hi - *lo, c1 = (0.01L * L) * (0.01L * L), c2 = (0.03L * L) * (0.03L * L);
    long double acc = 0.0L;
    int count = 0;
    for (std::size_t r = 0; r + 8 <= 16; ++r)
        for (std::size_t c = 0; c + 8 <= 16; ++c) {
            long double ma = 0, mb = 0;
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j) {
                    ma += a(r + i, c + j);
                    mb += b(r + i, c + j);
                }
            ma /= 64;
            mb /= 64;
            long double va = 0, vb = 0, cv = 0;
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j) {
                    va += (a(r + i, c + j) - ma) * (a(r + i, c + j) - ma);
                    vb += (b(r + i, c + j) - mb) * (b(r + i, c + j) - mb);
                    cv += (a(r + i, c + j) - ma) * (b(r + i, c + j) - mb);
                }
            va /= 64;
            vb /= 64;
            cv /= 64;
            acc += ((2 * ma * mb + c1) * (2 * cv + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    const double oracle = static_cast<double>(acc / count);
    const double s_self = ssim(a, a), r_self = rmse_roi(a, a, RoiMask::full(a.dims)), hu = to_hu(w).values[0];
    const double diff = std::abs(ssim(a, b) - oracle);
    const bool ok = std::abs(s_self - 1.0) <= 1e-15 && r_self == 0.0 && hu == 1000.0 && diff <= 1e-12;
    return {ok, "ssim(x,x) = " + fmt("%.15f", s_self) + ", rmse(x,x) = " + sci(r_self) + ", to_hu(water) = " +
                    fmt("%.1f", hu) + ", |ssim - oracle| = " + sci(diff)};
}

// 13 -----------------------------------------------------------------------
Outcome determinism() {
    const std::string text = R"(
[geometry]
rows = 32
cols = 32
pixel_size = 2
n_views = 48
n_detectors = 50
[model]
I0 = 3e3
sigma2 = 25
[phantom]
preset = four_ellipse
seed = 17
[learning]
K = 2
v = 16
stride = 2
iters = 10
gamma_c = 2e-3
[recon]
beta = 3e3
gamma_c = 2e-3
N = 5
P = 2
M = 4
stride = 2
ep_iters = 10
)";
    const fs::path base = fs::temp_directory_path() / "spultra_acceptance_determinism";
    fs::remove_all(base);
    std::ostringstream log;
    for (const char* run : {"a", "b"}) {
        ExperimentConfig cfg = parse_config_text(text);
        cfg.out_dir = base / run;
        if (run_pipeline(cfg, {Subcommand::all, std::nullopt, false}, log) != exit_code::ok) {
            return {false, "pipeline failed: " + log.str()};
        }
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), {});
    };
    std::size_t compared = 0, differing = 0;
    for (const auto& e : fs::directory_iterator(base / "a")) {
        const auto name = e.path().filename().string();
        if (e.path().extension() != ".spim" && name != "metrics.csv") continue;
        ++compared;
        if (!fs::exists(base / "b" / name) || slurp(e.path()) != slurp(base / "b" / name)) ++differing;
    }
    fs::remove_all(base);
    return {compared >= 8 && differing == 0,
            std::to_string(compared - differing) + "/" + std::to_string(compared) + " SPIM and metrics files byte-identical"};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "adjoint identity", adjoint_identity},
        {2, "dense-oracle equivalence", dense_oracle},
        {3, "surrogate majorization", surrogate_majorization},
        {4, "gradient checks", gradient_checks},
        {5, "rho schedule", rho_checks},
        {6, "sparse coding exactness", coding_exactness},
        {7, "monotone objective", monotone_objective},
        {8, "iterate-difference decay", step_decay},
        {9, "RMSE ordering SPULTRA <= PWLS-ULTRA <= PWLS-EP", table_trend},
        {10, "non-positive fraction vs dose", dose_trend},
        {11, "transform learning", learning_checks},
        {12, "metrics", metric_checks},
        {13, "pipeline determinism", determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
                  << fmt("%.1f", seconds_since(t0)) << " s)" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
