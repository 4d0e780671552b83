#pragma once

// Shared infrastructure: error taxonomy, deterministic RNG, little-endian
// byte IO, and the worker-count policy. Everything downstream depends on the
// determinism guarantees made here, so all randomness and serialization in
// the library goes through these helpers.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace clsboost {

// ---------------------------------------------------------------------------
// Errors. Categories map to process exit codes: usage/config -> 2,
// data -> 3, numeric -> 4. `code` is a stable machine-readable tag.
// ---------------------------------------------------------------------------

enum class ErrKind { usage, config, data, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrKind kind() const { return kind_; }
    const std::string& code() const { return code_; }

    int exit_code() const {
        switch (kind_) {
            case ErrKind::usage:
            case ErrKind::config: return 2;
            case ErrKind::data: return 3;
            case ErrKind::numeric: return 4;
        }
        return 1;
    }

    // Pipeline stage that was running when the error surfaced, if any.
    std::string stage;

private:
    ErrKind kind_;
    std::string code_;
};

inline Error usage_error(std::string code, const std::string& msg) {
    return Error(ErrKind::usage, std::move(code), msg);
}
inline Error config_error(std::string code, const std::string& msg) {
    return Error(ErrKind::config, std::move(code), msg);
}
inline Error data_error(std::string code, const std::string& msg) {
    return Error(ErrKind::data, std::move(code), msg);
}
inline Error numeric_error(std::string code, const std::string& msg) {
    return Error(ErrKind::numeric, std::move(code), msg);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is bit-exact across platforms; the standard
// distributions are not, so uniform/index/normal are implemented here with a
// fixed algorithm.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stable sub-seed for a named stream (trial id, split index, ...).
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x4CF5AD432745937FULL));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform on [0,1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0,1]; safe to pass to log().
    double uniform01_open0() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // Uniform index in [0, n). Multiply-high mapping: deterministic, and the
    // bias (< n / 2^64) is irrelevant at our scales.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Box-Muller; burns exactly two draws per call.
    double normal() {
        const double u1 = uniform01_open0();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            const uint64_t j = below(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    // k distinct indices from [0, n), returned sorted ascending so that
    // downstream accumulation order is canonical.
    std::vector<size_t> sample_indices(size_t n, size_t k) {
        k = std::min(k, n);
        std::vector<size_t> all(n);
        for (size_t i = 0; i < n; ++i) all[i] = i;
        for (size_t i = 0; i < k; ++i) {
            const uint64_t j = i + below(n - i);
            std::swap(all[i], all[j]);
        }
        all.resize(k);
        std::sort(all.begin(), all.end());
        return all;
    }

private:
    std::mt19937_64 eng_;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------------------
// Little-endian byte IO. All binary file formats (CLSB, MLPH, GBDT) are
// written through these so the layouts are platform independent.
// ---------------------------------------------------------------------------

class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(uint16_t v) { put_le(v, 2); }
    void u32(uint32_t v) { put_le(v, 4); }
    void u64(uint64_t v) { put_le(v, 8); }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
    void bytes(std::string_view s) { buf_.append(s.data(), s.size()); }

    const std::string& data() const { return buf_; }

private:
    void put_le(uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(std::string_view data, std::string what)
        : data_(data), what_(std::move(what)) {}

    uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
    uint16_t u16() { return static_cast<uint16_t>(get_le(2)); }
    uint32_t u32() { return static_cast<uint32_t>(get_le(4)); }
    uint64_t u64() { return get_le(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string_view raw(size_t n) { return take(n); }

    bool exhausted() const { return pos_ == data_.size(); }
    size_t remaining() const { return data_.size() - pos_; }

    void expect_exhausted() const {
        if (!exhausted())
            throw data_error("trailing_bytes", what_ + ": " +
                             std::to_string(remaining()) + " unexpected trailing bytes");
    }

private:
    std::string_view take(size_t n) {
        if (data_.size() - pos_ < n)
            throw data_error("truncated", what_ + ": truncated (need " + std::to_string(n) +
                             " bytes at offset " + std::to_string(pos_) + ")");
        std::string_view out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    uint64_t get_le(int n) {
        std::string_view b = take(static_cast<size_t>(n));
        uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(b[i])) << (8 * i);
        return v;
    }

    std::string_view data_;
    size_t pos_ = 0;
    std::string what_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("io", "cannot open " + path);
    std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw data_error("io", "read failed on " + path);
    return out;
}

inline void write_file(const std::string& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("io", "cannot open " + path + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw data_error("io", "write failed on " + path);
}

// ---------------------------------------------------------------------------
// Worker policy. CLSBOOST_THREADS caps the worker count; results never depend
// on it (work is partitioned by feature with a fixed reduction order).
// ---------------------------------------------------------------------------

inline unsigned worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    unsigned cap = std::min(hw, 16u);
    if (const char* env = std::getenv("CLSBOOST_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) cap = std::min(cap, static_cast<unsigned>(v));
        else cap = 1;
    }
    return std::max(cap, 1u);
}

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
// worker. fn must only touch state owned by its chunk.
template <typename Fn>
void parallel_chunks(size_t n, Fn&& fn) {
    const unsigned workers = std::min<size_t>(worker_count(), n);
    if (workers <= 1) {
        if (n > 0) fn(size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const size_t chunk = (n + workers - 1) / workers;
    std::mutex err_mu;
    std::exception_ptr err;
    for (unsigned w = 0; w < workers; ++w) {
        const size_t b = w * chunk;
        const size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, &err_mu, &err, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace clsboost
