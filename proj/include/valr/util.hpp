#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace valr {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

// FNV-1a, 64-bit. Used for content hashes in run manifests and the
// determinism smoke tests; not cryptographic.
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);
uint64_t hash_file(const std::string& path);
std::string hex64(uint64_t v);

std::vector<uint8_t> read_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_file(const std::string& path, const void* data, size_t n);
// write to <path>.tmp then rename, so readers never see a partial file
void write_file_atomic(const std::string& path, const void* data, size_t n);

std::string base64_encode(const uint8_t* data, size_t n);
std::vector<uint8_t> base64_decode(const std::string& s);

// Little-endian binary (de)serialization, independent of host order.
class ByteWriter {
public:
    void u8(uint8_t v);
    void u16(uint16_t v);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void f64(double v);
    void raw(const void* data, size_t n);
    void str_u16(const std::string& s);  // u16 length + bytes
    void str_u32(const std::string& s);  // u32 length + bytes
    const std::vector<uint8_t>& bytes() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t n) : p_(data), end_(data + n) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : ByteReader(v.data(), v.size()) {}
    uint8_t u8();
    uint16_t u16();
    uint32_t u32();
    uint64_t u64();
    float f32();
    double f64();
    void raw(void* dst, size_t n);
    std::string str_u16();
    std::string str_u32();
    size_t remaining() const { return size_t(end_ - p_); }

private:
    void need(size_t n) const;
    const uint8_t* p_;
    const uint8_t* end_;
};

bool is_perfect_square(int64_t v);
int isqrt_exact(int64_t v);  // fails unless v is a perfect square

}  // namespace valr
