#pragma once

// Embedding-vector data model and IO.
//
// The on-disk format ("CLSB") is bit-exact and little-endian everywhere:
//   magic "CLSB" | u16 version=1 | u64 n_rows | u32 dim | n_rows*dim f32
// stub_encode is the deterministic hashed n-gram encoder that stands in for
// a transformer at desk scale: each unigram and adjacent bigram is hashed
// with 64-bit FNV-1a over (seed bytes || token bytes), with 0x1F joining the
// two tokens of a bigram; the low bits (mod dim) pick a coordinate, bit 32
// picks the sign, and the signed counts are L2-normalized.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clsboost/common.hpp"

namespace clsboost {

struct EmbeddingMatrix {
    size_t n_rows = 0;
    size_t dim = 0;
    std::vector<float> values;  // row-major, n_rows * dim

    static EmbeddingMatrix zeros(size_t n_rows, size_t dim) {
        EmbeddingMatrix m;
        m.n_rows = n_rows;
        m.dim = dim;
        m.values.assign(n_rows * dim, 0.0f);
        return m;
    }

    std::span<const float> row(size_t i) const {
        return std::span<const float>(values.data() + i * dim, dim);
    }
    std::span<float> row(size_t i) {
        return std::span<float>(values.data() + i * dim, dim);
    }

    bool operator==(const EmbeddingMatrix&) const = default;
};

struct LayerStack {
    std::vector<EmbeddingMatrix> layers;
};

namespace detail {

inline void check_stack(const LayerStack& stack) {
    if (stack.layers.empty())
        throw data_error("empty_stack", "layer stack has no layers");
    const size_t rows = stack.layers.front().n_rows;
    for (size_t l = 1; l < stack.layers.size(); ++l)
        if (stack.layers[l].n_rows != rows)
            throw data_error("dim_mismatch",
                             "layer " + std::to_string(l) + " has " +
                             std::to_string(stack.layers[l].n_rows) + " rows, expected " +
                             std::to_string(rows));
}

}  // namespace detail

// Row-wise in-order concatenation; values are copied exactly.
inline EmbeddingMatrix concat_layers(const LayerStack& stack) {
    detail::check_stack(stack);
    const size_t rows = stack.layers.front().n_rows;
    size_t dim = 0;
    for (const auto& l : stack.layers) dim += l.dim;
    EmbeddingMatrix out = EmbeddingMatrix::zeros(rows, dim);
    for (size_t i = 0; i < rows; ++i) {
        float* dst = out.values.data() + i * dim;
        for (const auto& l : stack.layers) {
            auto src = l.row(i);
            std::copy(src.begin(), src.end(), dst);
            dst += l.dim;
        }
    }
    return out;
}

// Element-wise mean across layers; requires equal dims. Alternative to
// concatenation for callers that prefer pooled vectors.
inline EmbeddingMatrix mean_layers(const LayerStack& stack) {
    detail::check_stack(stack);
    const size_t rows = stack.layers.front().n_rows;
    const size_t dim = stack.layers.front().dim;
    for (size_t l = 1; l < stack.layers.size(); ++l)
        if (stack.layers[l].dim != dim)
            throw data_error("dim_mismatch",
                             "layer " + std::to_string(l) + " has dim " +
                             std::to_string(stack.layers[l].dim) + ", mean pooling needs " +
                             std::to_string(dim));
    EmbeddingMatrix out = EmbeddingMatrix::zeros(rows, dim);
    const double scale = 1.0 / static_cast<double>(stack.layers.size());
    for (size_t i = 0; i < rows * dim; ++i) {
        double acc = 0.0;
        for (const auto& l : stack.layers) acc += l.values[i];
        out.values[i] = static_cast<float>(acc * scale);
    }
    return out;
}

enum class LayerCombine { concat, mean };

inline EmbeddingMatrix combine_layers(const LayerStack& stack, LayerCombine mode) {
    return mode == LayerCombine::concat ? concat_layers(stack) : mean_layers(stack);
}

// ---------------------------------------------------------------------------
// CLSB file format
// ---------------------------------------------------------------------------

inline constexpr std::string_view kClsbMagic = "CLSB";
inline constexpr uint16_t kClsbVersion = 1;

inline void write_embeddings(const EmbeddingMatrix& m, const std::string& path) {
    if (m.dim == 0) throw data_error("bad_dim", "embedding matrix dim must be >= 1");
    if (m.values.size() != m.n_rows * m.dim)
        throw data_error("bad_shape", "embedding value count does not match n_rows*dim");
    ByteWriter w;
    w.bytes(kClsbMagic);
    w.u16(kClsbVersion);
    w.u64(m.n_rows);
    w.u32(static_cast<uint32_t>(m.dim));
    for (float v : m.values) w.f32(v);
    write_file(path, w.data());
}

inline EmbeddingMatrix read_embeddings(const std::string& path) {
    const std::string body = read_file(path);
    ByteReader r(body, path);
    if (r.remaining() < 4 || r.raw(4) != kClsbMagic)
        throw data_error("bad_magic", path + ": not a CLSB embedding file");
    const uint16_t version = r.u16();
    if (version != kClsbVersion)
        throw data_error("bad_version", path + ": unsupported CLSB version " + std::to_string(version));
    EmbeddingMatrix m;
    m.n_rows = r.u64();
    m.dim = r.u32();
    if (m.dim == 0) throw data_error("bad_dim", path + ": embedding dim must be >= 1");
    m.values.resize(m.n_rows * m.dim);
    for (auto& v : m.values) v = r.f32();
    r.expect_exhausted();
    for (size_t i = 0; i < m.values.size(); ++i)
        if (!std::isfinite(m.values[i]))
            throw data_error("non_finite", path + ": non-finite value at flat index " + std::to_string(i));
    return m;
}

// ---------------------------------------------------------------------------
// Stub encoder
// ---------------------------------------------------------------------------

namespace detail {

class Fnv1a64 {
public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            h_ ^= c;
            h_ *= 1099511628211ULL;
        }
    }
    void update_u64_le(uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h_ ^= static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
            h_ *= 1099511628211ULL;
        }
    }
    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 14695981039346656037ULL;
};

inline uint64_t stub_hash_unigram(uint64_t seed, std::string_view tok) {
    Fnv1a64 h;
    h.update_u64_le(seed);
    h.update(tok);
    return h.digest();
}

inline uint64_t stub_hash_bigram(uint64_t seed, std::string_view a, std::string_view b) {
    Fnv1a64 h;
    h.update_u64_le(seed);
    h.update(a);
    h.update("\x1F");
    h.update(b);
    return h.digest();
}

}  // namespace detail

// Signed hashed unigram+bigram counts, L2-normalized (all-zero stays zero).
inline std::vector<float> stub_encode(const std::vector<std::string>& tokens, size_t dim,
                                      uint64_t seed) {
    if (dim == 0) throw config_error("bad_dim", "stub_encode: dim must be >= 1");
    std::vector<double> acc(dim, 0.0);
    auto add = [&](uint64_t h) {
        const size_t idx = static_cast<size_t>(h % dim);
        acc[idx] += ((h >> 32) & 1ULL) ? 1.0 : -1.0;
    };
    for (const auto& t : tokens) add(detail::stub_hash_unigram(seed, t));
    for (size_t i = 0; i + 1 < tokens.size(); ++i)
        add(detail::stub_hash_bigram(seed, tokens[i], tokens[i + 1]));
    double norm_sq = 0.0;
    for (double v : acc) norm_sq += v * v;
    std::vector<float> out(dim, 0.0f);
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] * inv);
    }
    return out;
}

}  // namespace clsboost
