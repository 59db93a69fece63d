#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "yoeo/errors.hpp"

// Little-endian primitives shared by the checkpoint and dataset containers.
namespace yoeo::nn::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
        std::memcpy(&value, bytes, sizeof(T));
    }
    return value;
}

template <typename T>
void write(std::ostream& out, T value) {
    value = to_little(value);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read(std::istream& in, const std::string& what) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
        throw LoadError("unexpected end of file while reading " + what);
    }
    return to_little(value);
}

inline void write_bytes(std::ostream& out, const std::string& bytes) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(std::istream& in, std::size_t count, const std::string& what) {
    std::string bytes(count, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(count));
    if (in.gcount() != static_cast<std::streamsize>(count)) {
        throw LoadError("unexpected end of file while reading " + what);
    }
    return bytes;
}

/// Writes `contents` through a temporary sibling file and renames it into place.
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace yoeo::nn::io
