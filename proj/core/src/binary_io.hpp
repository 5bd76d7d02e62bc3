#pragma once

// Little-endian binary readers/writers shared by the embedding and
// checkpoint file formats. Assumes an LE host.

#include "rana/common.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <string_view>

namespace rana::io {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw FormatError(std::string("truncated file while reading ") + what);
    return v;
}

inline void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline double read_f64(std::istream& in, const char* what) {
    double v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw FormatError(std::string("truncated file while reading ") + what);
    return v;
}

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    std::string got(magic.size(), '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(magic.size())) || got != magic)
        throw FormatError("bad magic: expected " + std::string(magic));
}

// Row-major f32 matrix payload.
inline void write_mat_f32(std::ostream& out, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            float f = static_cast<float>(m(r, c));
            out.write(reinterpret_cast<const char*>(&f), sizeof f);
        }
}

inline Mat read_mat_f32(std::istream& in, Eigen::Index rows, Eigen::Index cols, const char* what) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            float f = 0;
            if (!in.read(reinterpret_cast<char*>(&f), sizeof f))
                throw FormatError(std::string("truncated file while reading ") + what);
            m(r, c) = f;
        }
    return m;
}

}  // namespace rana::io
