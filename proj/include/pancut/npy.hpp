#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pancut/errors.hpp"

// ============================================================================
// NPY v1.0 / v2.0 codec
//
// Minimal reader/writer for little-endian float tensors ('<f4' and '<f8',
// C-contiguous).  64-bit data is narrowed to 32-bit floats on load; everything
// else is refused loudly rather than reinterpreted.  Raw payload bytes are
// memcpy'd, so 32-bit round trips are bit-exact.
// ============================================================================

namespace pancut::npy {

static_assert(std::endian::native == std::endian::little,
              "NPY codec assumes a little-endian host");

struct Array {
    std::vector<std::size_t> shape;
    std::vector<float> data;  // always float32 after load

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

namespace detail {

inline constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

/// Extract the quoted value of a dict key, e.g. descr_value("'descr': '<f4'").
inline std::string dict_string(const std::string& header, const std::string& key) {
    auto kpos = header.find("'" + key + "'");
    if (kpos == std::string::npos)
        throw FormatError("npy header missing key '" + key + "'");
    auto colon = header.find(':', kpos);
    auto q0 = header.find('\'', colon + 1);
    auto q1 = header.find('\'', q0 + 1);
    if (colon == std::string::npos || q0 == std::string::npos || q1 == std::string::npos)
        throw FormatError("npy header: malformed value for '" + key + "'");
    return header.substr(q0 + 1, q1 - q0 - 1);
}

inline bool dict_bool(const std::string& header, const std::string& key) {
    auto kpos = header.find("'" + key + "'");
    if (kpos == std::string::npos)
        throw FormatError("npy header missing key '" + key + "'");
    auto colon = header.find(':', kpos);
    auto rest = header.substr(colon + 1, 8);
    if (rest.find("True") != std::string::npos) return true;
    if (rest.find("False") != std::string::npos) return false;
    throw FormatError("npy header: malformed boolean for '" + key + "'");
}

inline std::vector<std::size_t> dict_shape(const std::string& header) {
    auto kpos = header.find("'shape'");
    if (kpos == std::string::npos) throw FormatError("npy header missing key 'shape'");
    auto open = header.find('(', kpos);
    auto close = header.find(')', open);
    if (open == std::string::npos || close == std::string::npos)
        throw FormatError("npy header: malformed shape tuple");
    std::vector<std::size_t> shape;
    std::size_t pos = open + 1;
    while (pos < close) {
        while (pos < close && (header[pos] == ' ' || header[pos] == ',')) ++pos;
        if (pos >= close) break;
        std::size_t end = pos;
        while (end < close && header[end] >= '0' && header[end] <= '9') ++end;
        if (end == pos) throw FormatError("npy header: non-numeric shape entry");
        shape.push_back(std::stoull(header.substr(pos, end - pos)));
        pos = end;
    }
    return shape;
}

} // namespace detail

/// Load a '<f4' or '<f8' tensor; f8 payloads are narrowed to f32.
inline Array load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open npy file: " + path);

    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, detail::kMagic, 6) != 0)
        throw FormatError("bad npy magic in " + path);

    unsigned char ver[2];
    in.read(reinterpret_cast<char*>(ver), 2);
    if (!in || ver[1] != 0 || (ver[0] != 1 && ver[0] != 2))
        throw FormatError("unsupported npy version in " + path);

    std::uint32_t header_len = 0;
    if (ver[0] == 1) {
        unsigned char b[2];
        in.read(reinterpret_cast<char*>(b), 2);
        header_len = b[0] | (std::uint32_t(b[1]) << 8);
    } else {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        header_len = b[0] | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                     (std::uint32_t(b[3]) << 24);
    }
    if (!in) throw FormatError("truncated npy header in " + path);

    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw FormatError("truncated npy header in " + path);

    const std::string descr = detail::dict_string(header, "descr");
    if (descr != "<f4" && descr != "<f8")
        throw FormatError("unsupported npy dtype '" + descr + "' in " + path +
                          " (expected '<f4' or '<f8')");
    if (detail::dict_bool(header, "fortran_order"))
        throw FormatError("fortran-order npy not supported: " + path);

    Array arr;
    arr.shape = detail::dict_shape(header);
    const std::size_t n = arr.element_count();
    arr.data.resize(n);

    if (descr == "<f4") {
        if (!in.read(reinterpret_cast<char*>(arr.data.data()),
                     static_cast<std::streamsize>(n * 4)))
            throw FormatError("truncated npy payload in " + path);
    } else {
        std::vector<double> wide(n);
        if (!in.read(reinterpret_cast<char*>(wide.data()),
                     static_cast<std::streamsize>(n * 8)))
            throw FormatError("truncated npy payload in " + path);
        for (std::size_t i = 0; i < n; ++i) arr.data[i] = static_cast<float>(wide[i]);
    }
    return arr;
}

namespace detail {

inline void write_header(std::ofstream& out, const std::vector<std::size_t>& shape,
                         const char* descr) {
    std::string dict = "{'descr': '";
    dict += descr;
    dict += "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        dict += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
        if (i + 1 < shape.size()) dict += " ";
    }
    dict += "), }";
    // pad with spaces so magic+version+len+dict+'\n' is a multiple of 64
    std::size_t unpadded = 6 + 2 + 2 + dict.size() + 1;
    std::size_t pad = (64 - unpadded % 64) % 64;
    dict.append(pad, ' ');
    dict += '\n';
    if (dict.size() > 65535) throw SizeError("npy header too large");

    out.write(kMagic, 6);
    const unsigned char ver[2] = {1, 0};
    out.write(reinterpret_cast<const char*>(ver), 2);
    const std::uint16_t len = static_cast<std::uint16_t>(dict.size());
    const unsigned char lb[2] = {static_cast<unsigned char>(len & 0xff),
                                 static_cast<unsigned char>(len >> 8)};
    out.write(reinterpret_cast<const char*>(lb), 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
}

} // namespace detail

/// Write a float32 tensor as NPY v1.0 ('<f4').
inline void save(const std::string& path, const std::vector<std::size_t>& shape,
                 const float* data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write npy file: " + path);
    detail::write_header(out, shape, "<f4");
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
    if (!out) throw FormatError("short write to " + path);
}

/// Write a float64 tensor as NPY v1.0 ('<f8'); used for narrowing fixtures.
inline void save_f8(const std::string& path, const std::vector<std::size_t>& shape,
                    const double* data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write npy file: " + path);
    detail::write_header(out, shape, "<f8");
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
    if (!out) throw FormatError("short write to " + path);
}

} // namespace pancut::npy
