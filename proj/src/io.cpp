#include "pnhf/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace pnhf::io {

namespace {

class ByteWriter {
  public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        const auto u = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    void raw(const char* data, std::size_t n) {
        bytes_.insert(bytes_.end(), data, data + n);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

  private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
  public:
    ByteReader(std::vector<std::uint8_t> bytes, std::string what)
        : bytes_(std::move(bytes)), what_(std::move(what)) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        const auto* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        const auto* p = take(4);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    double f64() {
        const auto* p = take(8);
        std::uint64_t u = 0;
        for (int i = 7; i >= 0; --i) u = (u << 8) | p[i];
        return std::bit_cast<double>(u);
    }
    std::string str(std::size_t n) {
        const auto* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    bool at_end() const { return pos_ == bytes_.size(); }
    void expect_end() const {
        if (!at_end()) throw std::runtime_error("corrupt " + what_ + ": trailing bytes");
    }

  private:
    const std::uint8_t* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw std::runtime_error("corrupt " + what_ + ": truncated file");
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::vector<std::uint8_t> read_all_bytes(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + what + " file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_all_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<SnapshotSeries>& examples) {
    if (examples.empty()) throw std::invalid_argument("cannot write empty dataset");
    const std::size_t n = examples.front().states.front().size();
    const auto& times = examples.front().times;
    for (const auto& ex : examples) {
        if (ex.times != times) throw std::invalid_argument("dataset examples must share snapshot times");
        if (ex.states.size() != times.size())
            throw std::invalid_argument("snapshot count does not match time ladder");
        for (const auto& s : ex.states)
            if (s.size() != n) throw std::invalid_argument("dataset examples must share particle count");
    }

    ByteWriter w;
    w.raw("PNHF", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(examples.size()));
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(times.size()));
    for (double t : times) w.f64(t);
    for (const auto& ex : examples) {
        w.f64(ex.spec.mu_q);
        w.f64(ex.spec.sigma_q);
        w.f64(ex.spec.mu_p);
        w.f64(ex.spec.sigma_p);
        for (const auto& s : ex.states) {
            for (double v : s.q) w.f64(v);
            for (double v : s.p) w.f64(v);
        }
    }
    atomic_write_binary(path, w.take());
}

std::vector<SnapshotSeries> read_dataset(const std::string& path) {
    ByteReader r(read_all_bytes(path, "dataset"), "dataset");
    if (r.str(4) != "PNHF") throw std::runtime_error("corrupt dataset: bad magic");
    const auto version = r.u32();
    if (version != 1) throw std::runtime_error("unsupported dataset version " + std::to_string(version));
    const auto count = r.u32();
    const auto n = r.u32();
    const auto snapshots = r.u32();
    if (count == 0 || n == 0 || snapshots == 0) throw std::runtime_error("corrupt dataset: empty dims");

    std::vector<double> times(snapshots);
    for (auto& t : times) t = r.f64();

    std::vector<SnapshotSeries> out(count);
    for (auto& ex : out) {
        ex.times = times;
        ex.spec.mu_q = r.f64();
        ex.spec.sigma_q = r.f64();
        ex.spec.mu_p = r.f64();
        ex.spec.sigma_p = r.f64();
        ex.states.resize(snapshots);
        for (auto& s : ex.states) {
            s.q.resize(n);
            s.p.resize(n);
            for (auto& v : s.q) v = r.f64();
            for (auto& v : s.p) v = r.f64();
        }
    }
    r.expect_end();
    return out;
}

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
    ByteWriter w;
    w.raw("PNHW", 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
        std::size_t expected = 1;
        for (auto d : t.dims) expected *= d;
        if (expected != t.data.size()) throw std::invalid_argument("tensor dims do not match data size");
        w.u16(static_cast<std::uint16_t>(t.name.size()));
        w.raw(t.name.data(), t.name.size());
        w.u8(static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) w.u32(d);
        for (double v : t.data) w.f64(v);
    }
    atomic_write_binary(path, w.take());
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
    ByteReader r(read_all_bytes(path, "checkpoint"), "checkpoint");
    if (r.str(4) != "PNHW") throw std::runtime_error("corrupt checkpoint: bad magic");
    const auto version = r.u32();
    if (version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto count = r.u32();

    std::vector<NamedTensor> out(count);
    for (auto& t : out) {
        const auto name_len = r.u16();
        t.name = r.str(name_len);
        const auto rank = r.u8();
        t.dims.resize(rank);
        std::size_t total = 1;
        for (auto& d : t.dims) {
            d = r.u32();
            total *= d;
        }
        t.data.resize(total);
        for (auto& v : t.data) v = r.f64();
    }
    r.expect_end();
    return out;
}

std::string format_double(double x) {
    char buf[40];
    // shortest form that parses back exactly
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void atomic_write_binary(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    write_all_bytes(path, bytes);
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace pnhf::io
