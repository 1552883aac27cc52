#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "trajstitch/errors.hpp"

namespace trajstitch {

inline void append_doubles(std::string& out, const std::vector<double>& v) {
    const size_t pos = out.size();
    out.resize(pos + v.size() * sizeof(double));
    std::memcpy(out.data() + pos, v.data(), v.size() * sizeof(double));
}

inline void read_doubles(const std::string& blob, size_t& offset, std::vector<double>& v, size_t count) {
    if (blob.size() < offset + count * sizeof(double)) throw IoError("blob: truncated float64 payload");
    v.resize(count);
    std::memcpy(v.data(), blob.data() + offset, count * sizeof(double));
    offset += count * sizeof(double);
}

inline void append_int64s(std::string& out, const std::vector<std::int64_t>& v) {
    const size_t pos = out.size();
    out.resize(pos + v.size() * sizeof(std::int64_t));
    std::memcpy(out.data() + pos, v.data(), v.size() * sizeof(std::int64_t));
}

inline void read_int64s(const std::string& blob, size_t& offset, std::vector<std::int64_t>& v, size_t count) {
    if (blob.size() < offset + count * sizeof(std::int64_t)) throw IoError("blob: truncated int64 payload");
    v.resize(count);
    std::memcpy(v.data(), blob.data() + offset, count * sizeof(std::int64_t));
    offset += count * sizeof(std::int64_t);
}

}  // namespace trajstitch
