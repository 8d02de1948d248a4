#include "spultra/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "spultra/error.hpp"

namespace spultra {

std::size_t RoiMask::count() const {
    return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), std::uint8_t{1}));
}

RoiMask RoiMask::full(GridDims dims, std::string label) {
    return {dims, std::vector<std::uint8_t>(dims.size(), 1), std::move(label)};
}

RoiMask RoiMask::ellipse(GridDims dims, PixelSpacing spacing, double cx, double cy, double ax, double ay,
                         std::string label) {
    RoiMask m{dims, std::vector<std::uint8_t>(dims.size(), 0), std::move(label)};
    for (std::size_t r = 0; r < dims.rows; ++r) {
        const double y = (0.5 * static_cast<double>(dims.rows - 1) - static_cast<double>(r)) * spacing.dy;
        for (std::size_t c = 0; c < dims.cols; ++c) {
            const double x = (static_cast<double>(c) - 0.5 * static_cast<double>(dims.cols - 1)) * spacing.dx;
            const double u = (x - cx) / ax;
            const double v = (y - cy) / ay;
            m.inside[r * dims.cols + c] = u * u + v * v <= 1.0 ? 1 : 0;
        }
    }
    return m;
}

ImageGrid to_hu(const ImageGrid& img, double mu_water) {
    if (!(mu_water > 0.0)) {
        throw ArgumentError("mu_water must be > 0");
    }
    ImageGrid out = img;
    for (double& v : out.values) v = 1000.0 * v / mu_water;
    return out;
}

namespace {

void check_mask(const ImageGrid& img, const RoiMask& mask) {
    if (mask.dims != img.dims || mask.inside.size() != img.size()) {
        throw ArgumentError("ROI mask does not match the image");
    }
    if (mask.count() == 0) {
        throw ArgumentError("ROI mask '" + mask.label + "' is empty");
    }
}

} // namespace

double rmse_roi(const ImageGrid& xhat, const ImageGrid& xtrue, const RoiMask& mask, double mu_water) {
    if (xhat.dims != xtrue.dims) {
        throw ArgumentError("rmse: image shapes differ");
    }
    check_mask(xhat, mask);
    if (!(mu_water > 0.0)) {
        throw ArgumentError("mu_water must be > 0");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < xhat.size(); ++j) {
        if (mask.inside[j]) {
            const double d = 1000.0 * (xhat.values[j] - xtrue.values[j]) / mu_water;
            acc += d * d;
        }
    }
    return std::sqrt(acc / static_cast<double>(mask.count()));
}

namespace {

// Summed-area table with one row/column of leading zeros.
std::vector<double> integral(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    std::vector<double> s((rows + 1) * (cols + 1), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double row_acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            row_acc += v[r * cols + c];
            s[(r + 1) * (cols + 1) + c + 1] = s[r * (cols + 1) + c + 1] + row_acc;
        }
    }
    return s;
}

double box(const std::vector<double>& s, std::size_t cols, std::size_t r, std::size_t c, std::size_t w) {
    const std::size_t stride = cols + 1;
    return s[(r + w) * stride + c + w] - s[r * stride + c + w] - s[(r + w) * stride + c] + s[r * stride + c];
}

} // namespace

double ssim(const ImageGrid& xhat, const ImageGrid& xtrue, std::size_t window,
            std::optional<double> dynamic_range) {
    if (xhat.dims != xtrue.dims) {
        throw ArgumentError("ssim: image shapes differ");
    }
    const std::size_t rows = xtrue.dims.rows, cols = xtrue.dims.cols;
    if (window == 0 || window > rows || window > cols) {
        throw ArgumentError("ssim: window does not fit the image");
    }
    double L = 0.0;
    if (dynamic_range) {
        L = *dynamic_range;
    } else {
        const auto [lo, hi] = std::minmax_element(xtrue.values.begin(), xtrue.values.end());
        L = *hi - *lo;
    }
    if (!(L > 0.0)) L = 1.0;
    const double c1 = (0.01 * L) * (0.01 * L);
    const double c2 = (0.03 * L) * (0.03 * L);

    // Subtracting a common offset leaves every local statistic unchanged except the
    // means, which are restored below; it keeps the integral images well scaled.
    double offset = 0.0;
    for (double v : xtrue.values) offset += v;
    offset /= static_cast<double>(xtrue.size());

    std::vector<double> a(xhat.size()), b(xtrue.size()), aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
        a[j] = xhat.values[j] - offset;
        b[j] = xtrue.values[j] - offset;
        aa[j] = a[j] * a[j];
        bb[j] = b[j] * b[j];
        ab[j] = a[j] * b[j];
    }
    const auto sa = integral(a, rows, cols), sb = integral(b, rows, cols);
    const auto saa = integral(aa, rows, cols), sbb = integral(bb, rows, cols), sab = integral(ab, rows, cols);

    const double n = static_cast<double>(window * window);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r + window <= rows; ++r) {
        for (std::size_t c = 0; c + window <= cols; ++c) {
            const double ma = box(sa, cols, r, c, window) / n;
            const double mb = box(sb, cols, r, c, window) / n;
            const double va = box(saa, cols, r, c, window) / n - ma * ma;
            const double vb = box(sbb, cols, r, c, window) / n - mb * mb;
            const double cov = box(sab, cols, r, c, window) / n - ma * mb;
            const double mx = ma + offset, my = mb + offset;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

RoiStats roi_stats(const ImageGrid& img, const RoiMask& mask, double mu_water) {
    check_mask(img, mask);
    const ImageGrid hu = to_hu(img, mu_water);
    const auto n = static_cast<double>(mask.count());
    double mean = 0.0;
    for (std::size_t j = 0; j < hu.size(); ++j) {
        if (mask.inside[j]) mean += hu.values[j];
    }
    mean /= n;
    double var = 0.0;
    for (std::size_t j = 0; j < hu.size(); ++j) {
        if (mask.inside[j]) var += (hu.values[j] - mean) * (hu.values[j] - mean);
    }
    return {mean, std::sqrt(var / n)};
}

std::vector<double> line_profile(const ImageGrid& img, LineAxis axis, std::size_t index, double mu_water) {
    if (!(mu_water > 0.0)) {
        throw ArgumentError("mu_water must be > 0");
    }
    std::vector<double> out;
    if (axis == LineAxis::row) {
        if (index >= img.dims.rows) throw ArgumentError("profile row index out of range");
        for (std::size_t c = 0; c < img.dims.cols; ++c) out.push_back(1000.0 * img(index, c) / mu_water);
    } else {
        if (index >= img.dims.cols) throw ArgumentError("profile column index out of range");
        for (std::size_t r = 0; r < img.dims.rows; ++r) out.push_back(1000.0 * img(r, index) / mu_water);
    }
    return out;
}

} // namespace spultra
