#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "spultra/error.hpp"

namespace spultra::detail {

template <typename UInt>
void put_le(std::ostream& os, UInt value) {
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFU);
    }
    os.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& is) {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is) {
        throw ConfigError("unexpected end of binary file");
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        value |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return value;
}

inline void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
inline std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

} // namespace spultra::detail
