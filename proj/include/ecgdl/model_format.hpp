#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ecgdl/errors.hpp"
#include "ecgdl/nn.hpp"

// .ecgm container: little-endian, single linear pass, no back-references.
// Layout (offsets in bytes):
//   0   magic "ECGM" (4)
//   4   format_version u32 (currently 1)
//   8   dtype tag u8 (0 = F32, 1 = F16)
//   9   model config: in_channels u32, input_length u32, dense_hidden u32,
//       leaky_alpha f64, 6 x conv_filters u32, 6 x conv_kernels u32
//   ... tensor count u32, then per tensor: rank u8, dims u32 each, payload
//       (elements in row-major order, 4 or 2 bytes each per dtype tag)
//   end CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320) over all prior bytes, u32
namespace ecgdl::model_format {

enum class Dtype : std::uint8_t { F32 = 0, F16 = 1 };

inline constexpr std::array<char, 4> kMagic{'E', 'C', 'G', 'M'};
inline constexpr std::uint32_t kFormatVersion = 1;

// ---------------------------------------------------------------------------
// IEEE 754 binary16 conversion (round-to-nearest-even)
// ---------------------------------------------------------------------------

inline std::uint16_t f32_to_f16(float x) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
    const std::uint32_t exp = (bits >> 23) & 0xffu;
    std::uint32_t mant = bits & 0x7fffffu;

    if (exp == 0xffu) { // inf / nan
        const std::uint16_t payload = mant ? 0x0200u | static_cast<std::uint16_t>(mant >> 13) : 0u;
        return static_cast<std::uint16_t>(sign | 0x7c00u | payload);
    }

    const int unbiased = static_cast<int>(exp) - 127;
    if (unbiased > 15) return static_cast<std::uint16_t>(sign | 0x7c00u); // overflow -> inf
    if (unbiased >= -14) {
        // normal half; round mantissa from 23 to 10 bits
        std::uint32_t half = (static_cast<std::uint32_t>(unbiased + 15) << 10) | (mant >> 13);
        const std::uint32_t rest = mant & 0x1fffu;
        if (rest > 0x1000u || (rest == 0x1000u && (half & 1u))) ++half; // carries into exp correctly
        return static_cast<std::uint16_t>(sign | half);
    }
    if (unbiased < -25) return sign; // underflow to signed zero
    // subnormal half
    mant |= 0x800000u; // implicit bit
    const int drop = -1 - unbiased; // 14..24 mantissa bits dropped
    std::uint32_t half = mant >> drop;
    const std::uint32_t rest = mant & ((1u << drop) - 1u);
    const std::uint32_t halfway = 1u << (drop - 1);
    if (rest > halfway || (rest == halfway && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
}

inline float f16_to_f32(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    const std::uint32_t mant = h & 0x3ffu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            // normalize the subnormal
            int e = -1;
            std::uint32_t m = mant;
            while (!(m & 0x400u)) { m <<= 1; ++e; }
            bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((m & 0x3ffu) << 13);
        }
    } else if (exp == 0x1fu) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

// ---------------------------------------------------------------------------
// CRC-32
// ---------------------------------------------------------------------------

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

// ---------------------------------------------------------------------------
// Byte IO
// ---------------------------------------------------------------------------

namespace detail {

struct Writer {
    std::vector<std::uint8_t> bytes;

    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u16(std::uint16_t v) {
        bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
        bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) {
        const auto b = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(b >> (8 * i)));
    }
};

struct Reader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > size) throw CorruptFile("file truncated at offset " + std::to_string(pos));
    }
    std::uint8_t u8() { need(1); return data[pos++]; }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// Encode / decode
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_model(const nn::ModelConfig& cfg, nn::ModelParams& params,
                                              Dtype dtype) {
    cfg.validate();
    detail::Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kFormatVersion);
    w.u8(static_cast<std::uint8_t>(dtype));
    w.u32(static_cast<std::uint32_t>(cfg.in_channels));
    w.u32(static_cast<std::uint32_t>(cfg.input_length));
    w.u32(static_cast<std::uint32_t>(cfg.dense_hidden));
    w.f64(cfg.leaky_alpha);
    for (auto f : cfg.conv_filters) w.u32(static_cast<std::uint32_t>(f));
    for (auto k : cfg.conv_kernels) w.u32(static_cast<std::uint32_t>(k));

    auto tensors = nn::all_tensors(params);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.u8(static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
        for (double v : *t.data) {
            if (!std::isfinite(v))
                throw EncodeError("non-finite parameter in " + t.name);
            if (dtype == Dtype::F32) w.f32(static_cast<float>(v));
            else w.u16(f32_to_f16(static_cast<float>(v)));
        }
    }
    w.u32(crc32(w.bytes.data(), w.bytes.size()));
    return w.bytes;
}

struct DecodedModel {
    nn::ModelConfig config;
    nn::ModelParams params;
    Dtype dtype = Dtype::F32;
};

inline DecodedModel decode_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
        throw NotAModelFile("missing ECGM magic");
    if (bytes.size() < 4 + 4 + 1 + 4)
        throw CorruptFile("file shorter than the fixed header");
    const std::uint32_t declared =
        static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
        (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8) |
        (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16) |
        (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24);
    if (crc32(bytes.data(), bytes.size() - 4) != declared)
        throw CorruptFile("checksum mismatch");

    detail::Reader r{bytes.data(), bytes.size() - 4};
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw UnsupportedVersion("format version " + std::to_string(version));
    const std::uint8_t tag = r.u8();
    if (tag > 1) throw CorruptFile("unknown dtype tag");
    const Dtype dtype = static_cast<Dtype>(tag);

    DecodedModel out;
    out.dtype = dtype;
    out.config.in_channels = r.u32();
    out.config.input_length = r.u32();
    out.config.dense_hidden = r.u32();
    out.config.leaky_alpha = r.f64();
    out.config.conv_filters.clear();
    out.config.conv_kernels.clear();
    for (std::size_t i = 0; i < nn::ModelConfig::n_blocks; ++i)
        out.config.conv_filters.push_back(r.u32());
    for (std::size_t i = 0; i < nn::ModelConfig::n_blocks; ++i)
        out.config.conv_kernels.push_back(r.u32());
    try {
        out.config.validate();
    } catch (const ShapeError& e) {
        throw CorruptFile(std::string("invalid configuration: ") + e.what());
    }

    out.params = nn::make_params(out.config);
    auto tensors = nn::all_tensors(out.params);
    const std::uint32_t count = r.u32();
    if (count != tensors.size())
        throw CorruptFile("tensor count mismatch: " + std::to_string(count));
    for (auto& t : tensors) {
        const std::uint8_t rank = r.u8();
        if (rank != t.shape.size())
            throw CorruptFile("rank mismatch for " + t.name);
        std::size_t numel = 1;
        for (std::size_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32();
            if (dim != t.shape[d]) throw CorruptFile("dimension mismatch for " + t.name);
            numel *= dim;
        }
        auto& dst = *t.data;
        if (numel != dst.size()) throw CorruptFile("element count mismatch for " + t.name);
        for (std::size_t i = 0; i < numel; ++i)
            dst[i] = dtype == Dtype::F32 ? static_cast<double>(r.f32())
                                         : static_cast<double>(f16_to_f32(r.u16()));
    }
    if (r.pos != r.size) throw CorruptFile("trailing bytes after tensor payloads");
    return out;
}

// ---------------------------------------------------------------------------
// Size accounting
// ---------------------------------------------------------------------------

struct SizeReport {
    std::size_t total = 0;
    std::size_t header = 0; // magic + version + dtype + config + tensor count
    std::size_t checksum = 4;
    struct Layer {
        std::string name;
        std::size_t descriptor = 0; // rank + dims
        std::size_t payload = 0;
    };
    std::vector<Layer> layers;

    std::size_t payload_total() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.descriptor + l.payload;
        return n;
    }
};

inline SizeReport size_report(const std::vector<std::uint8_t>& bytes) {
    DecodedModel model = decode_model(bytes); // validates before accounting
    SizeReport rep;
    rep.total = bytes.size();
    rep.header = 4 + 4 + 1 + (3 * 4 + 8 + 12 * 4) + 4;
    const std::size_t elem = model.dtype == Dtype::F32 ? 4 : 2;
    for (const auto& t : nn::all_tensors(model.params)) {
        SizeReport::Layer l;
        l.name = t.name;
        l.descriptor = 1 + 4 * t.shape.size();
        l.payload = elem * t.data->size();
        rep.layers.push_back(std::move(l));
    }
    return rep;
}

// payload bytes only (excludes descriptors), for dtype comparisons
inline std::size_t payload_bytes(const SizeReport& rep) {
    std::size_t n = 0;
    for (const auto& l : rep.layers) n += l.payload;
    return n;
}

// ---------------------------------------------------------------------------
// Training checkpoint (64-bit parameters + Adam moments + history)
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_checkpoint(const nn::ModelConfig& cfg,
                                                   nn::ModelParams& params,
                                                   const nn::AdamState& adam,
                                                   const std::vector<nn::EpochStats>& history) {
    detail::Writer w;
    for (char c : {'E', 'C', 'G', 'C'}) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(cfg.in_channels));
    w.u32(static_cast<std::uint32_t>(cfg.input_length));
    auto tensors = nn::all_tensors(params);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.u32(static_cast<std::uint32_t>(t.data->size()));
        for (double v : *t.data) w.f64(v);
    }
    w.u32(static_cast<std::uint32_t>(adam.m.size()));
    for (std::size_t k = 0; k < adam.m.size(); ++k) {
        w.u32(static_cast<std::uint32_t>(adam.m[k].size()));
        for (double v : adam.m[k]) w.f64(v);
        for (double v : adam.v[k]) w.f64(v);
    }
    w.u32(static_cast<std::uint32_t>(history.size()));
    for (const auto& h : history) {
        w.u32(static_cast<std::uint32_t>(h.epoch));
        w.f64(h.train_loss);
        w.f64(h.val_loss);
        w.f64(h.val_accuracy);
    }
    w.u32(crc32(w.bytes.data(), w.bytes.size()));
    return w.bytes;
}

} // namespace ecgdl::model_format
