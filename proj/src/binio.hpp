#pragma once

// Little-endian byte helpers shared by the TRCO/TRCL/TRCM containers.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "trico/error.hpp"

namespace trico::binio {

inline void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<char>((v >> s) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    put_u32(buf, static_cast<std::uint32_t>(v));
    put_u32(buf, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string(), 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string(), 0, "cannot open file for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(path.string(), 0, "write failed");
}

class Reader {
public:
    Reader(std::string bytes, std::string file) : bytes_(std::move(bytes)), file_(std::move(file)) {}

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw FormatError(file_, pos_, std::string("truncated payload reading ") + what);
    }
    void expect_magic(std::string_view magic) {
        need(magic.size(), "magic");
        if (std::string_view(bytes_).substr(pos_, magic.size()) != magic)
            throw FormatError(file_, pos_, "bad magic, expected " + std::string(magic));
        pos_ += magic.size();
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(byte(0) | (byte(1) << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        const std::uint32_t v = byte(0) | (byte(1) << 8) | (byte(2) << 16) | (byte(3) << 24);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        const std::uint64_t lo = u32(what);
        const std::uint64_t hi = u32(what);
        return lo | (hi << 32);
    }
    void expect_version(std::uint16_t want) {
        const std::size_t at = pos_;
        const std::uint16_t v = u16("version");
        if (v != want) throw FormatError(file_, at, "unsupported version " + std::to_string(v));
    }
    void expect_end() const {
        if (pos_ != bytes_.size()) throw FormatError(file_, pos_, "trailing bytes after payload");
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::size_t pos() const noexcept { return pos_; }
    const std::string& file() const noexcept { return file_; }

private:
    std::uint32_t byte(std::size_t k) const { return static_cast<unsigned char>(bytes_[pos_ + k]); }

    std::string bytes_;
    std::string file_;
    std::size_t pos_ = 0;
};


}  // namespace trico::binio
