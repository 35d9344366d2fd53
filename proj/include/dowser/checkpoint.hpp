#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

// Versioned binary checkpoint encoding shared by model and index snapshots:
// magic bytes, u32 format version, then little-endian fixed-width fields.
// Doubles are written as raw IEEE-754 bits so round-trips are bitwise exact.
namespace dowser::checkpoint {

class Writer {
public:
    explicit Writer(const std::filesystem::path& path)
        : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot open for write: " + path.string());
    }

    void magic(const char (&m)[5], std::uint32_t version) {
        out_.write(m, 4);
        u32(version);
    }

    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 4);
    }

    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 8);
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }

    void str(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void f64_vec(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }

    void close() {
        out_.flush();
        if (!out_) throw std::runtime_error("checkpoint write failed");
        out_.close();
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path)
        : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open for read: " + path.string());
    }

    // Verifies magic bytes and returns the stored format version.
    std::uint32_t magic(const char (&m)[5]) {
        char got[4];
        read(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            throw std::runtime_error("checkpoint magic mismatch");
        return u32();
    }

    std::uint32_t u32() {
        unsigned char b[4];
        read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        unsigned char b[8];
        read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    std::string str() {
        std::uint64_t n = u64();
        std::string s(n, '\0');
        read(s.data(), static_cast<std::streamsize>(n));
        return s;
    }

    std::vector<double> f64_vec() {
        std::uint64_t n = u64();
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }

private:
    void read(char* dst, std::streamsize n) {
        in_.read(dst, n);
        if (in_.gcount() != n) throw std::runtime_error("checkpoint truncated");
    }
    std::ifstream in_;
};

}  // namespace dowser::checkpoint
