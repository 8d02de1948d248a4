#include "spultra/spstats.hpp"

#include <algorithm>
#include <cmath>

#include "spultra/error.hpp"

namespace spultra {

bool BeamHardening::inverse(double t, double& l) const {
    const double disc = s1 * s1 + 4.0 * s2 * t;
    if (disc < 0.0) {
        return false;
    }
    // 2t / (s1 + sqrt(disc)) is the larger root without cancellation; it is t/s1 when s2 == 0.
    l = 2.0 * t / (s1 + std::sqrt(disc));
    return true;
}

void SpModel::validate() const {
    if (!(I0 > 0.0)) throw ArgumentError("I0 must be > 0");
    if (!(sigma2 >= 0.0)) throw ArgumentError("sigma2 must be >= 0");
    if (!(bh.s1 > 0.0)) throw ArgumentError("beam-hardening s1 must be > 0");
    for (const auto& c : per_ray_bh) {
        if (!(c.s1 > 0.0)) throw ArgumentError("beam-hardening s1 must be > 0");
    }
}

RayTerm ray_term(double l, double Y, double I0, double sigma2, const BeamHardening& bh) {
    const double att = I0 * std::exp(-bh.f(l));
    double m = att + sigma2;
    bool clamped = false;
    if (!(m >= kMeanFloor)) {
        m = kMeanFloor;
        clamped = Y > 0.0;
    }
    const double fd = bh.df(l);
    const double dm = -att * fd;
    const double d2m = att * (fd * fd - bh.d2f());
    const double ratio = Y / m;
    return {m - Y * std::log(m), dm * (1.0 - ratio), d2m * (1.0 - ratio) + ratio * dm * dm / m, clamped};
}

std::vector<double> shifted_counts(std::span<const double> y_raw, const SpModel& model) {
    std::vector<double> Y(y_raw.size());
    std::transform(y_raw.begin(), y_raw.end(), Y.begin(),
                   [&](double y) { return std::max(y + model.sigma2, 0.0); });
    return Y;
}

namespace {

void check_lengths(std::span<const double> l, std::span<const double> Y, const SpModel& m) {
    if (l.size() != Y.size()) {
        throw ConfigError("line-integral and count vectors differ in length");
    }
    if (!m.per_ray_bh.empty() && m.per_ray_bh.size() != l.size()) {
        throw ConfigError("per-ray beam-hardening table does not match the ray count");
    }
}

} // namespace

double neg_log_likelihood(std::span<const double> l, std::span<const double> Y, const SpModel& model,
                          std::vector<std::size_t>* flagged) {
    check_lengths(l, Y, model);
    double total = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        const RayTerm t = ray_term(l[i], Y[i], model.I0, model.sigma2, model.coeffs(i));
        total += t.h;
        if (t.clamped && flagged != nullptr) {
            flagged->push_back(i);
        }
    }
    return total;
}

std::vector<double> likelihood_gradient(std::span<const double> l, std::span<const double> Y,
                                        const SpModel& model, std::vector<std::size_t>* flagged) {
    check_lengths(l, Y, model);
    std::vector<double> g(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) {
        const RayTerm t = ray_term(l[i], Y[i], model.I0, model.sigma2, model.coeffs(i));
        g[i] = t.dh;
        if (t.clamped && flagged != nullptr) {
            flagged->push_back(i);
        }
    }
    return g;
}

double ray_optimum_curvature(double l_n, double Y, double I0, double sigma2, const BeamHardening& bh) {
    const double cap = std::max(ray_term(0.0, Y, I0, sigma2, bh).d2h, 0.0);
    if (l_n <= 0.0) {
        return cap;
    }
    // h(0) - h(l) = (m0 - m) - Y log(m0 / m) with m0 - m = -I0 expm1(-f(l)); evaluated in
    // extended precision because the numerator is O(l^2) while its terms are O(l).
    using ld = long double;
    const ld f = static_cast<ld>(bh.f(l_n));
    const ld delta = -static_cast<ld>(I0) * std::expm1(-f);
    const ld m = static_cast<ld>(I0) * std::exp(-f) + static_cast<ld>(sigma2);
    const ld fd = static_cast<ld>(bh.df(l_n));
    const ld dh = -static_cast<ld>(I0) * std::exp(-f) * fd * (1.0L - static_cast<ld>(Y) / m);
    const ld ln = static_cast<ld>(l_n);
    const ld num = delta - static_cast<ld>(Y) * std::log1p(delta / m) + ln * dh;
    const double c = static_cast<double>(2.0L * num / (ln * ln));
    return std::min(std::max(c, 0.0), cap);
}

double curvature_floor(std::span<const double> c) {
    double cmax = 0.0;
    for (double v : c) {
        cmax = std::max(cmax, v);
    }
    return cmax > 0.0 ? 1e-12 * cmax : 1e-20;
}

std::vector<double> optimum_curvature(std::span<const double> l_n, std::span<const double> Y,
                                      const SpModel& model) {
    check_lengths(l_n, Y, model);
    std::vector<double> c(l_n.size());
    for (std::size_t i = 0; i < l_n.size(); ++i) {
        c[i] = ray_optimum_curvature(l_n[i], Y[i], model.I0, model.sigma2, model.coeffs(i));
    }
    const double floor = curvature_floor(c);
    for (double& v : c) {
        if (v <= 0.0) {
            v = floor;
        }
    }
    return c;
}

double surrogate_value(double l, double l_n, double h_n, double dh_n, double c) {
    const double d = l - l_n;
    return h_n + dh_n * d + 0.5 * c * d * d;
}

SurrogateState build_surrogate(const ImageGrid& x_n, std::span<const double> Y, const SpModel& model,
                               const SystemMatrix& A) {
    if (Y.size() != A.n_rays()) {
        throw ConfigError("count vector does not match the ray count");
    }
    if (x_n.values.size() != A.n_pixels()) {
        throw ConfigError("image does not match geometry");
    }
    SurrogateState s;
    s.l_n.resize(A.n_rays());
    A.forward(x_n.values, s.l_n);
    s.d_h = likelihood_gradient(s.l_n, Y, model);
    s.W = optimum_curvature(s.l_n, Y, model);
    s.y_tilde.resize(A.n_rays());
    for (std::size_t i = 0; i < s.y_tilde.size(); ++i) {
        s.y_tilde[i] = s.l_n[i] - s.d_h[i] / s.W[i];
    }
    return s;
}

double surrogate_constant(const SurrogateState& s, std::span<const double> Y, const SpModel& model) {
    double q = 0.0;
    for (std::size_t i = 0; i < s.W.size(); ++i) {
        q += s.d_h[i] * s.d_h[i] / s.W[i];
    }
    return neg_log_likelihood(s.l_n, Y, model) - 0.5 * q;
}

double surrogate_quadratic(const SurrogateState& s, std::span<const double> l) {
    if (l.size() != s.W.size()) {
        throw ConfigError("line-integral vector does not match the surrogate");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        const double r = s.y_tilde[i] - l[i];
        acc += s.W[i] * r * r;
    }
    return 0.5 * acc;
}

PostLogData post_log_convert(std::span<const double> y_raw, const SpModel& model) {
    if (!model.per_ray_bh.empty() && model.per_ray_bh.size() != y_raw.size()) {
        throw ConfigError("per-ray beam-hardening table does not match the ray count");
    }
    PostLogData out;
    out.l_tilde.resize(y_raw.size());
    out.w_tilde.resize(y_raw.size());
    for (std::size_t i = 0; i < y_raw.size(); ++i) {
        double y = y_raw[i];
        if (y <= 0.0) {
            y = kNonPositiveFill;
            ++out.replaced;
        }
        const BeamHardening& bh = model.coeffs(i);
        const double t = std::log(model.I0 / y);
        double l = 0.0;
        if (!bh.inverse(t, l)) {
            out.flagged.push_back(i);
            out.l_tilde[i] = 0.0;
            out.w_tilde[i] = 0.0;
            continue;
        }
        const double fd = bh.df(l);
        out.l_tilde[i] = l;
        out.w_tilde[i] = fd * fd * y * y / (y + model.sigma2);
    }
    return out;
}

} // namespace spultra
