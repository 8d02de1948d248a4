#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "spultra/error.hpp"
#include "spultra/geometry.hpp"

using namespace spultra;
using namespace spultra::testing;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Segment endpoints for a ray, re-derived from the documented geometry.
void ray_endpoints(const SystemGeometry& g, std::size_t v, std::size_t d, double& x0, double& y0, double& x1,
                   double& y1, bool& infinite) {
    const double th = g.view_angle(v);
    const double ex = -std::sin(th), ey = std::cos(th);
    const double nx = std::cos(th), ny = std::sin(th);
    const double u = (static_cast<double>(d) - 0.5 * (static_cast<double>(g.n_detectors) - 1.0)) * g.detector_spacing;
    if (g.beam_kind == BeamKind::parallel) {
        x0 = u * nx;
        y0 = u * ny;
        x1 = x0 + ex;
        y1 = y0 + ey;
        infinite = true;
        return;
    }
    x0 = -g.source_to_iso * ex;
    y0 = -g.source_to_iso * ey;
    x1 = x0 + g.source_to_detector * ex + u * nx;
    y1 = y0 + g.source_to_detector * ey + u * ny;
    infinite = false;
}

// Liang-Barsky clip of the ray against one pixel box; returns chord length.
double chord(double x0, double y0, double x1, double y1, bool infinite, double bx0, double bx1, double by0, double by1) {
    double lo = infinite ? -1e300 : 0.0, hi = infinite ? 1e300 : 1.0;
    const double dx = x1 - x0, dy = y1 - y0;
    auto clip = [&](double p, double q) {
        if (p == 0.0) return q >= 0.0;
        const double r = q / p;
        if (p < 0.0) lo = std::max(lo, r);
        else hi = std::min(hi, r);
        return true;
    };
    if (!clip(-dx, x0 - bx0) || !clip(dx, bx1 - x0) || !clip(-dy, y0 - by0) || !clip(dy, by1 - y0)) return 0.0;
    return hi > lo ? (hi - lo) * std::hypot(dx, dy) : 0.0;
}

// Dense A from per-pixel clipping, independent of the Siddon traversal.
Eigen::MatrixXd dense_by_clipping(const SystemGeometry& g) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(g.n_rays(), g.n_pixels());
    const double dxp = g.pixel_spacing.dx, dyp = g.pixel_spacing.dy;
    const double xmin = -0.5 * g.image_dims.cols * dxp, ymax = 0.5 * g.image_dims.rows * dyp;
    for (std::size_t v = 0; v < g.n_views; ++v)
        for (std::size_t d = 0; d < g.n_detectors; ++d) {
            double x0, y0, x1, y1;
            bool inf;
            ray_endpoints(g, v, d, x0, y0, x1, y1, inf);
            for (std::size_t r = 0; r < g.image_dims.rows; ++r)
                for (std::size_t c = 0; c < g.image_dims.cols; ++c) {
                    const double bx0 = xmin + c * dxp, by1 = ymax - r * dyp;
                    D(v * g.n_detectors + d, r * g.image_dims.cols + c) =
                        chord(x0, y0, x1, y1, inf, bx0, bx0 + dxp, by1 - dyp, by1);
                }
        }
    return D;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

} // namespace

TEST_SUITE("geometry") {

TEST_CASE("zero image projects to zero and zero sinogram back-projects to zero") {
    const SystemGeometry g = parallel_geometry(6, 5, 7, 9);
    const SystemMatrix A(g);
    const Sinogram s = forward_project(ImageGrid(g.image_dims), A);
    for (double v : s.values) CHECK(v == 0.0);
    const ImageGrid b = back_project(Sinogram(g.n_views, g.n_detectors), A);
    for (double v : b.values) CHECK(v == 0.0);
}

TEST_CASE("single pixel crossed perpendicular to a face has unit intersection") {
    const SystemGeometry g = parallel_geometry(1, 1, 1, 1);
    const auto hits = trace_ray(g, 0, 0);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].pixel == 0);
    CHECK(hits[0].length == doctest::Approx(1.0).epsilon(1e-15));
    ImageGrid img(g.image_dims);
    img.values[0] = 1.0;
    CHECK(forward_project(img, g).values[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("vertical ray through a column sums pixel heights") {
    SystemGeometry g = parallel_geometry(4, 3, 1, 3, 1.0, 1.0);
    g.pixel_spacing = {1.0, 2.5};
    const auto hits = trace_ray(g, 0, 1);
    REQUIRE(hits.size() == 4);
    double total = 0.0;
    for (const auto& h : hits) {
        CHECK(h.pixel % 3 == 1);
        total += h.length;
    }
    CHECK(total == doctest::Approx(10.0));
}

TEST_CASE("Siddon lengths match per-pixel clipping for parallel and fan beam") {
    for (const SystemGeometry& g : {parallel_geometry(7, 9, 13, 15, 1.3, 0.9), fan_geometry(8, 7, 11, 17, 1.1, 1.7)}) {
        const SystemMatrix A(g);
        const Eigen::MatrixXd S = dense_from_columns(A);
        const Eigen::MatrixXd C = dense_by_clipping(g);
        Eigen::Index ri, ci;
        const double md = (S - C).cwiseAbs().maxCoeff(&ri, &ci);
        CHECK_MESSAGE(md <= 1e-12 * C.cwiseAbs().maxCoeff(), "ray " << ri << " pixel " << ci << " S " << S(ri, ci) << " C " << C(ri, ci));
    }
}

TEST_CASE("a ray along a shared pixel edge is counted once") {
    // 6 columns put a grid line at x = 0, exactly under the central ray of view 0.
    const SystemGeometry g = parallel_geometry(5, 6, 1, 3, 1.0, 1.0);
    const auto hits = trace_ray(g, 0, 1);
    double total = 0.0;
    for (const auto& h : hits) total += h.length;
    CHECK(total == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(hits.size() == 5);
}

TEST_CASE("random 8x8 image against the column-assembled dense oracle") {
    std::mt19937_64 rng(11);
    const SystemGeometry g = parallel_geometry(8, 8, 10, 13);
    const SystemMatrix A(g);
    const Eigen::MatrixXd D = dense_from_columns(A);
    const ImageGrid x = random_image(g.image_dims, rng);
    const Eigen::Map<const Eigen::VectorXd> xv(x.values.data(), x.values.size());
    const Sinogram s = forward_project(x, A);
    CHECK(max_rel_diff(s.values, to_std(D * xv)) <= 1e-12);
    for (std::size_t i = 0; i < A.n_rays(); i += 7) {
        Sinogram onehot(g.n_views, g.n_detectors);
        onehot.values[i] = 1.0;
        const ImageGrid b = back_project(onehot, A);
        CHECK(max_rel_diff(b.values, to_std(D.row(static_cast<Eigen::Index>(i)).transpose())) <= 1e-12);
    }
}

TEST_CASE("adjoint identity on random pairs") {
    std::mt19937_64 rng(5);
    for (const SystemGeometry& g : {parallel_geometry(12, 10, 17, 19), fan_geometry(10, 12, 19, 23)}) {
        const SystemMatrix A(g);
        for (int trial = 0; trial < 20; ++trial) {
            const auto x = random_vector(A.n_pixels(), rng, -1.0, 1.0);
            const auto y = random_vector(A.n_rays(), rng, -1.0, 1.0);
            std::vector<double> ax(A.n_rays()), aty(A.n_pixels());
            A.forward(x, ax);
            A.back(y, aty);
            CHECK(std::abs(dot(ax, y) - dot(x, aty)) <= 1e-10 * norm2(ax) * norm2(y));
        }
    }
}

TEST_CASE("forward projection of a nonnegative image is nonnegative") {
    std::mt19937_64 rng(3);
    const SystemGeometry g = fan_geometry(9, 9, 12, 15);
    const ImageGrid x = random_image(g.image_dims, rng);
    for (double v : forward_project(x, g).values) CHECK(v >= 0.0);
}

TEST_CASE("weighted_gram_diag examples and dense oracle") {
    SUBCASE("zero weights") {
        const SystemGeometry g = parallel_geometry(4, 4, 5, 6);
        const ImageGrid d = weighted_gram_diag(g, std::vector<double>(g.n_rays(), 0.0));
        for (double v : d.values) CHECK(v == 0.0);
    }
    SUBCASE("negative weight is rejected") {
        const SystemGeometry g = parallel_geometry(4, 4, 5, 6);
        std::vector<double> w(g.n_rays(), 1.0);
        w[3] = -1.0;
        CHECK_THROWS_AS(weighted_gram_diag(g, w), ArgumentError);
        CHECK_THROWS_AS(compute_kappa(g, w), ArgumentError);
    }
    SUBCASE("two-ray toy system with hand-computed diagonal") {
        // 1x2 image, 2 mm tall pixels, one vertical view: A = diag(2, 2).
        SystemGeometry g = parallel_geometry(1, 2, 1, 2);
        g.pixel_spacing = {1.0, 2.0};
        const ImageGrid d = weighted_gram_diag(g, std::vector<double>{0.25, 1.0});
        CHECK(d.values[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(d.values[1] == doctest::Approx(4.0).epsilon(1e-15));
    }
    SUBCASE("random system") {
        std::mt19937_64 rng(9);
        for (const SystemGeometry& g : {parallel_geometry(16, 15, 9, 23), fan_geometry(12, 13, 10, 21)}) {
            REQUIRE(g.n_pixels() <= 256);
            const SystemMatrix A(g);
            const Eigen::MatrixXd D = dense_by_clipping(g);
            const auto w = random_vector(A.n_rays(), rng, 0.0, 3.0);
            const Eigen::Map<const Eigen::VectorXd> wv(w.data(), w.size());
            const Eigen::VectorXd oracle = D.transpose() * (wv.asDiagonal() * (D * Eigen::VectorXd::Ones(D.cols())));
            CHECK(max_rel_diff(weighted_gram_diag(A, w).values, to_std(oracle)) <= 1e-12);

            const Eigen::VectorXd num = D.transpose() * wv;
            const Eigen::VectorXd den = D.transpose() * Eigen::VectorXd::Ones(D.rows());
            std::vector<double> kappa(D.cols());
            for (Eigen::Index j = 0; j < D.cols(); ++j) kappa[j] = den(j) > 0 ? std::sqrt(num(j) / den(j)) : 0.0;
            CHECK(max_rel_diff(compute_kappa(A, w).values, kappa) <= 1e-12);
        }
    }
}

TEST_CASE("kappa examples") {
    SUBCASE("constant weights give sqrt(c) on covered pixels") {
        const SystemGeometry g = parallel_geometry(5, 5, 8, 9);
        const ImageGrid k = compute_kappa(g, std::vector<double>(g.n_rays(), 2.25));
        for (double v : k.values) CHECK(v == doctest::Approx(1.5).epsilon(1e-14));
    }
    SUBCASE("one pixel, two unit-length rays with weights (4, 9)") {
        const SystemGeometry g = parallel_geometry(1, 1, 2, 1);
        const ImageGrid k = compute_kappa(g, std::vector<double>{4.0, 9.0});
        CHECK(k.values[0] == doctest::Approx(std::sqrt(13.0 / 2.0)).epsilon(1e-14));
        CHECK(k.values[0] == doctest::Approx(2.5495).epsilon(1e-4));
    }
    SUBCASE("pixels no ray reaches get zero") {
        const SystemGeometry g = parallel_geometry(5, 5, 1, 1);  // one vertical ray through the centre column
        const ImageGrid k = compute_kappa(g, std::vector<double>{4.0});
        CHECK(k(0, 2) == doctest::Approx(2.0));
        CHECK(k(0, 0) == 0.0);
    }
}

TEST_CASE("ordered subsets use bit-reversal interleaving and partition the views") {
    const ViewSubsets s(12, 4);
    REQUIRE(s.count() == 4);
    const std::size_t first[] = {0, 2, 1, 3};
    std::vector<int> seen(12, 0);
    for (std::size_t m = 0; m < 4; ++m) {
        CHECK(s.views(m).front() == first[m]);
        for (std::size_t v : s.views(m)) {
            CHECK(v % 4 == first[m]);
            ++seen[v];
        }
    }
    for (int c : seen) CHECK(c == 1);
    const ViewSubsets six(18, 6);
    CHECK(six.views(0).front() == 0);
    CHECK(six.views(1).front() == 4);
    CHECK_THROWS_AS(ViewSubsets(4, 5), ConfigError);
}

TEST_CASE("subset projections touch only their rays") {
    std::mt19937_64 rng(2);
    const SystemGeometry g = parallel_geometry(6, 6, 8, 9);
    const SystemMatrix A(g);
    const ViewSubsets s(8, 4);
    const auto x = random_vector(A.n_pixels(), rng);
    std::vector<double> full(A.n_rays()), part(A.n_rays(), -7.0);
    A.forward(x, full);
    A.forward_views(s.views(1), x, part);
    for (std::size_t v = 0; v < 8; ++v)
        for (std::size_t d = 0; d < 9; ++d) {
            const std::size_t i = v * 9 + d;
            if (v % 4 == s.views(1).front()) CHECK(part[i] == full[i]);
            else CHECK(part[i] == -7.0);
        }
    // Sum of subset back projections equals the full back projection.
    const auto y = random_vector(A.n_rays(), rng);
    std::vector<double> total(A.n_pixels(), 0.0), b(A.n_pixels()), ref(A.n_pixels());
    for (std::size_t m = 0; m < s.count(); ++m) {
        A.back_views(s.views(m), y, b);
        for (std::size_t j = 0; j < b.size(); ++j) total[j] += b[j];
    }
    A.back(y, ref);
    CHECK(max_rel_diff(total, ref) <= 1e-13);
}

TEST_CASE("geometry validation") {
    SystemGeometry g = parallel_geometry(4, 4, 4, 4);
    CHECK_NOTHROW(g.validate());
    g.detector_spacing = 0.0;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    SystemGeometry f = fan_geometry(4, 4, 4, 4);
    f.source_to_detector = f.source_to_iso * 0.5;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    const SystemGeometry p = parallel_geometry(4, 4, 4, 4);
    CHECK_THROWS_AS(forward_project(ImageGrid({3, 4}), p), ConfigError);
    CHECK_THROWS_AS(back_project(Sinogram(2, 2), p), ConfigError);
    CHECK(p.view_angle(2) == doctest::Approx(kPi / 2));
}

} // TEST_SUITE
