#include "spultra/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "binary_io.hpp"
#include "spultra/error.hpp"
#include "spultra/metrics.hpp"

namespace spultra {

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'P', 'I', 'M'};

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw ConfigError("cannot write " + path.string());
    }
    return os;
}

} // namespace

void write_spim(const std::filesystem::path& path, const SpimArray& a) {
    if (a.spacing.size() != a.dims.size()) {
        throw ConfigError("SPIM: spacing must have one entry per dimension");
    }
    std::size_t n = 1;
    for (auto d : a.dims) n *= d;
    if (n != a.data.size()) {
        throw ConfigError("SPIM: payload size does not match dims");
    }
    std::ofstream os = open_out(path);
    os.write(kMagic.data(), kMagic.size());
    detail::put_u32(os, kSpimVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) detail::put_u32(os, d);
    for (double s : a.spacing) detail::put_f64(os, s);
    for (double v : a.data) detail::put_f64(os, v);
    if (!os) {
        throw ConfigError("SPIM: write failed for " + path.string());
    }
}

SpimArray read_spim(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw MissingArtifactError("missing artifact " + path.string());
    }
    std::ifstream is(path, std::ios::binary);
    std::array<char, 4> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) {
        throw ConfigError(path.string() + " is not a SPIM file");
    }
    if (const auto version = detail::get_u32(is); version != kSpimVersion) {
        throw ConfigError(path.string() + ": unsupported SPIM version " + std::to_string(version));
    }
    SpimArray a;
    const std::uint32_t nd = detail::get_u32(is);
    if (nd == 0 || nd > 8) {
        throw ConfigError(path.string() + ": implausible dimension count");
    }
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < nd; ++k) {
        a.dims.push_back(detail::get_u32(is));
        n *= a.dims.back();
    }
    for (std::uint32_t k = 0; k < nd; ++k) a.spacing.push_back(detail::get_f64(is));
    a.data.resize(n);
    for (double& v : a.data) v = detail::get_f64(is);
    return a;
}

void save_image(const std::filesystem::path& path, const ImageGrid& img) {
    write_spim(path, {{static_cast<std::uint32_t>(img.dims.rows), static_cast<std::uint32_t>(img.dims.cols)},
                      {img.spacing.dy, img.spacing.dx},
                      img.values});
}

ImageGrid load_image(const std::filesystem::path& path) {
    SpimArray a = read_spim(path);
    if (a.dims.size() != 2) {
        throw ConfigError(path.string() + ": expected a 2D image");
    }
    ImageGrid img({a.dims[0], a.dims[1]}, {a.spacing[1], a.spacing[0]});
    img.values = std::move(a.data);
    return img;
}

void save_sinogram(const std::filesystem::path& path, const Sinogram& s, double view_step, double detector_spacing) {
    write_spim(path, {{static_cast<std::uint32_t>(s.n_views), static_cast<std::uint32_t>(s.n_detectors)},
                      {view_step, detector_spacing},
                      s.values});
}

Sinogram load_sinogram(const std::filesystem::path& path) {
    SpimArray a = read_spim(path);
    if (a.dims.size() != 2) {
        throw ConfigError(path.string() + ": expected a 2D sinogram");
    }
    Sinogram s(a.dims[0], a.dims[1]);
    s.values = std::move(a.data);
    return s;
}

void write_pgm(const std::filesystem::path& path, const ImageGrid& img, double mu_water, double lo, double hi) {
    if (!(hi > lo)) {
        throw ArgumentError("PGM window must have hi > lo");
    }
    std::ofstream os = open_out(path);
    os << "P5\n" << img.dims.cols << ' ' << img.dims.rows << "\n65535\n";
    for (double mu : img.values) {
        const double hu = 1000.0 * mu / mu_water;
        const double t = std::clamp((hu - lo) / (hi - lo), 0.0, 1.0);
        const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
        os.write(bytes, 2);
    }
}

namespace {

std::string digest_hex(const unsigned char* md, unsigned len) {
    std::ostringstream hex;
    for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

struct MdCtx {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    MdCtx() {
        if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("SHA-256 initialisation failed");
        }
    }
    ~MdCtx() { EVP_MD_CTX_free(ctx); }
    void update(const void* p, std::size_t n) { EVP_DigestUpdate(ctx, p, n); }
    std::string finish() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned len = 0;
        EVP_DigestFinal_ex(ctx, md, &len);
        return digest_hex(md, len);
    }
};

} // namespace

std::string sha256_hex(const std::string& bytes) {
    MdCtx md;
    md.update(bytes.data(), bytes.size());
    return md.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw MissingArtifactError("missing artifact " + path.string());
    }
    MdCtx md;
    std::array<char, 1 << 16> buf{};
    while (is) {
        is.read(buf.data(), buf.size());
        md.update(buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    return md.finish();
}

} // namespace spultra
