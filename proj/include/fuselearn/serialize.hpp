#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "fuselearn/common.hpp"

// Little-endian binary writer/reader used by the checkpoint format. All
// multi-byte values are encoded explicitly so files are identical across
// hosts; writing the same state twice yields byte-identical output.

namespace fuselearn {

class BinaryWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void f32(float v) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void raw(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void f64_vec(const std::vector<double>& v) {
        u32(static_cast<uint32_t>(v.size()));
        for (double x : v) f64(x);
    }

    const std::vector<uint8_t>& bytes() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::vector<uint8_t> bytes) : buf_(std::move(bytes)) {}

    uint8_t u8() { return buf_.at(pos_++); }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
        return v;
    }
    uint64_t u64() {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
        return v;
    }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    double f64() {
        uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    float f32() {
        uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        check(n);
        std::string s(reinterpret_cast<const char*>(&buf_[pos_]), n);
        pos_ += n;
        return s;
    }
    std::vector<double> f64_vec() {
        uint32_t n = u32();
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    void check(size_t n) const {
        if (pos_ + n > buf_.size()) throw DataError("truncated binary stream");
    }
    std::vector<uint8_t> buf_;
    size_t pos_ = 0;
};

}  // namespace fuselearn
