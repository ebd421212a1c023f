#include "valr/util.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace valr {

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t hash_file(const std::string& path) {
    auto bytes = read_file(path);
    return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    auto n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) fail("short read: " + path);
    return buf;
}

std::string read_text_file(const std::string& path) {
    auto b = read_file(path);
    return std::string(b.begin(), b.end());
}

void write_file(const std::string& path, const void* data, size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail("cannot open file for writing: " + path);
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) fail("short write: " + path);
}

void write_file_atomic(const std::string& path, const void* data, size_t n) {
    std::string tmp = path + ".tmp";
    write_file(tmp, data, n);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail("atomic rename failed for " + path + ": " + ec.message());
}

static const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const uint8_t* data, size_t n) {
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= n; i += 3) {
        uint32_t v = (uint32_t(data[i]) << 16) | (uint32_t(data[i + 1]) << 8) | data[i + 2];
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    size_t rem = n - i;
    if (rem == 1) {
        uint32_t v = uint32_t(data[i]) << 16;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += "==";
    } else if (rem == 2) {
        uint32_t v = (uint32_t(data[i]) << 16) | (uint32_t(data[i + 1]) << 8);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (s.size() % 4 != 0) fail("base64: length not a multiple of 4");
    std::vector<uint8_t> out;
    out.reserve(s.size() / 4 * 3);
    for (size_t i = 0; i < s.size(); i += 4) {
        int pad = 0;
        uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            char c = s[i + k];
            if (c == '=') {
                if (i + 4 != s.size() || k < 2) fail("base64: bad padding");
                ++pad;
                v <<= 6;
                continue;
            }
            int d = val(c);
            if (d < 0 || pad > 0) fail("base64: bad character");
            v = (v << 6) | uint32_t(d);
        }
        out.push_back(uint8_t((v >> 16) & 0xff));
        if (pad < 2) out.push_back(uint8_t((v >> 8) & 0xff));
        if (pad < 1) out.push_back(uint8_t(v & 0xff));
    }
    return out;
}

void ByteWriter::u8(uint8_t v) { buf_.push_back(v); }
void ByteWriter::u16(uint16_t v) {
    buf_.push_back(uint8_t(v & 0xff));
    buf_.push_back(uint8_t(v >> 8));
}
void ByteWriter::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t((v >> (8 * i)) & 0xff));
}
void ByteWriter::u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t((v >> (8 * i)) & 0xff));
}
void ByteWriter::f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
void ByteWriter::raw(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
}
void ByteWriter::str_u16(const std::string& s) {
    if (s.size() > 0xffff) fail("string too long for u16 length prefix");
    u16(uint16_t(s.size()));
    raw(s.data(), s.size());
}
void ByteWriter::str_u32(const std::string& s) {
    u32(uint32_t(s.size()));
    raw(s.data(), s.size());
}

void ByteReader::need(size_t n) const {
    if (remaining() < n) fail("unexpected end of binary data");
}
uint8_t ByteReader::u8() {
    need(1);
    return *p_++;
}
uint16_t ByteReader::u16() {
    need(2);
    uint16_t v = uint16_t(p_[0]) | (uint16_t(p_[1]) << 8);
    p_ += 2;
    return v;
}
uint32_t ByteReader::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p_[i]) << (8 * i);
    p_ += 4;
    return v;
}
uint64_t ByteReader::u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p_[i]) << (8 * i);
    p_ += 8;
    return v;
}
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
void ByteReader::raw(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, p_, n);
    p_ += n;
}
std::string ByteReader::str_u16() {
    size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
}
std::string ByteReader::str_u32() {
    size_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
}

bool is_perfect_square(int64_t v) {
    if (v < 0) return false;
    auto r = int64_t(std::sqrt(double(v)));
    for (int64_t c = r - 1; c <= r + 1; ++c)
        if (c >= 0 && c * c == v) return true;
    return false;
}

int isqrt_exact(int64_t v) {
    auto r = int64_t(std::sqrt(double(v)));
    for (int64_t c = r - 1; c <= r + 1; ++c)
        if (c >= 0 && c * c == v) return int(c);
    fail("not a perfect square: " + std::to_string(v));
}

}  // namespace valr
