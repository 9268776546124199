#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ecgdl/model_format.hpp"

using namespace ecgdl;
using namespace ecgdl::model_format;

namespace {

nn::ModelConfig small_config() {
    nn::ModelConfig cfg;
    cfg.in_channels = 1;
    cfg.input_length = 64;
    cfg.conv_filters = {2, 2, 3, 3, 4, 4};
    cfg.conv_kernels = {7, 7, 5, 5, 3, 3};
    cfg.dense_hidden = 5;
    return cfg;
}

} // namespace

// --- binary16 ----------------------------------------------------------------

TEST(F16, ExactRepresentables) {
    EXPECT_EQ(f32_to_f16(0.0f), 0x0000);
    EXPECT_EQ(f32_to_f16(-0.0f), 0x8000);
    EXPECT_EQ(f32_to_f16(1.0f), 0x3C00);
    EXPECT_EQ(f32_to_f16(-2.0f), 0xC000);
    EXPECT_EQ(f32_to_f16(0.5f), 0x3800);
    EXPECT_EQ(f32_to_f16(65504.0f), 0x7BFF); // largest finite half
}

TEST(F16, RoundToNearestEven) {
    EXPECT_EQ(f32_to_f16(0.1f), 0x2E66);
    // 1.0009765625 = 1 + 2^-10 is exactly representable; half of that ULP
    // above 1.0 must round to even (stay at 1.0)
    EXPECT_EQ(f32_to_f16(1.00048828125f), 0x3C00);
    EXPECT_EQ(f32_to_f16(1.001465f), 0x3C02); // next halfway rounds up to even
}

TEST(F16, OverflowToInfinity) {
    EXPECT_EQ(f32_to_f16(70000.0f), 0x7C00);
    EXPECT_EQ(f32_to_f16(-70000.0f), 0xFC00);
    EXPECT_EQ(f32_to_f16(std::numeric_limits<float>::infinity()), 0x7C00);
}

TEST(F16, Subnormals) {
    // smallest positive half subnormal is 2^-24
    EXPECT_EQ(f32_to_f16(std::ldexp(1.0f, -24)), 0x0001);
    EXPECT_EQ(f16_to_f32(0x0001), std::ldexp(1.0f, -24));
    // below half of the smallest subnormal underflows to zero
    EXPECT_EQ(f32_to_f16(std::ldexp(1.0f, -26)), 0x0000);
}

TEST(F16, RoundTripAllBitPatterns) {
    // every finite half converts to float and back to the identical bits
    for (std::uint32_t h = 0; h <= 0xffff; ++h) {
        const auto hv = static_cast<std::uint16_t>(h);
        if (((hv >> 10) & 0x1f) == 0x1f) continue; // inf / nan
        EXPECT_EQ(f32_to_f16(f16_to_f32(hv)), hv) << "pattern " << h;
    }
}

TEST(F16, HalfUlpBoundProperty) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> ud(-100.0f, 100.0f);
    for (int i = 0; i < 10000; ++i) {
        const float x = ud(rng);
        const float back = f16_to_f32(f32_to_f16(x));
        int e;
        std::frexp(x, &e); // x in [2^(e-1), 2^e)
        const float ulp_half = std::ldexp(1.0f, e - 1 - 11);
        EXPECT_LE(std::abs(back - x), ulp_half + 1e-30f);
    }
}

// --- CRC ---------------------------------------------------------------------

TEST(Crc32, KnownVectors) {
    const char* s = "123456789";
    EXPECT_EQ(crc32(reinterpret_cast<const std::uint8_t*>(s), 9), 0xCBF43926u);
    EXPECT_EQ(crc32(nullptr, 0), 0u);
    const char* a = "a";
    EXPECT_EQ(crc32(reinterpret_cast<const std::uint8_t*>(a), 1), 0xE8B7BE43u);
}

// --- encode / decode ---------------------------------------------------------

TEST(ModelFile, F32RoundTripIsBitLossless) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 42);
    // f64 params survive an f32 trip only at f32 precision; snap them first
    for (auto& t : nn::all_tensors(params))
        for (auto& v : *t.data) v = static_cast<double>(static_cast<float>(v));

    const auto bytes = encode_model(cfg, params, Dtype::F32);
    auto decoded = decode_model(bytes);
    EXPECT_EQ(decoded.dtype, Dtype::F32);
    EXPECT_EQ(decoded.config.in_channels, cfg.in_channels);
    EXPECT_EQ(decoded.config.conv_filters, cfg.conv_filters);

    auto orig = nn::all_tensors(params);
    auto back = nn::all_tensors(decoded.params);
    ASSERT_EQ(orig.size(), back.size());
    for (std::size_t k = 0; k < orig.size(); ++k)
        EXPECT_EQ(*orig[k].data, *back[k].data) << orig[k].name;

    // and re-encoding reproduces the identical bytes
    EXPECT_EQ(encode_model(decoded.config, decoded.params, Dtype::F32), bytes);
}

TEST(ModelFile, F16RoundTripWithinHalfUlp) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 17);
    const auto bytes = encode_model(cfg, params, Dtype::F16);
    auto decoded = decode_model(bytes);
    EXPECT_EQ(decoded.dtype, Dtype::F16);
    auto orig = nn::all_tensors(params);
    auto back = nn::all_tensors(decoded.params);
    for (std::size_t k = 0; k < orig.size(); ++k) {
        for (std::size_t i = 0; i < orig[k].data->size(); ++i) {
            const double x = (*orig[k].data)[i];
            const double got = (*back[k].data)[i];
            // independent oracle for the expected quantized value
            const float expected = f16_to_f32(f32_to_f16(static_cast<float>(x)));
            EXPECT_EQ(got, static_cast<double>(expected));
        }
    }
}

TEST(ModelFile, LoadedParamsReproducePredictions) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 23);
    for (auto& t : nn::all_tensors(params))
        for (auto& v : *t.data) v = static_cast<double>(static_cast<float>(v));

    std::mt19937_64 rng(29);
    Tensor x({4, 1, 64});
    std::normal_distribution<double> nd;
    for (auto& v : x.vec()) v = nd(rng);

    auto decoded = decode_model(encode_model(cfg, params, Dtype::F32));
    const auto a = nn::predict(cfg, params, x);
    const auto b = nn::predict(decoded.config, decoded.params, x);
    EXPECT_EQ(a, b);
}

TEST(ModelFile, NonFiniteParameterRejected) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 1);
    params.fc2.bias[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(encode_model(cfg, params, Dtype::F32), EncodeError);
    params.fc2.bias[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(encode_model(cfg, params, Dtype::F16), EncodeError);
}

TEST(ModelFile, BadMagic) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 1);
    auto bytes = encode_model(cfg, params, Dtype::F32);
    bytes[0] = 'X';
    EXPECT_THROW(decode_model(bytes), NotAModelFile);
    EXPECT_THROW(decode_model({}), NotAModelFile);
    EXPECT_THROW(decode_model({'E', 'C'}), NotAModelFile);
}

TEST(ModelFile, FlippedByteIsCorrupt) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 1);
    auto bytes = encode_model(cfg, params, Dtype::F32);
    bytes[bytes.size() / 2] ^= 0x40;
    EXPECT_THROW(decode_model(bytes), CorruptFile);
}

TEST(ModelFile, UnknownVersion) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 1);
    auto bytes = encode_model(cfg, params, Dtype::F32);
    bytes[4] = 9; // version field
    // checksum must be made consistent again so the version check is reached
    const std::uint32_t crc = crc32(bytes.data(), bytes.size() - 4);
    for (int i = 0; i < 4; ++i)
        bytes[bytes.size() - 4 + static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(crc >> (8 * i));
    EXPECT_THROW(decode_model(bytes), UnsupportedVersion);
}

TEST(ModelFile, TruncationIsTyped) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 1);
    const auto bytes = encode_model(cfg, params, Dtype::F32);
    for (std::size_t keep : {5ul, 13ul, 100ul, bytes.size() - 1}) {
        std::vector<std::uint8_t> cut(bytes.begin(),
                                      bytes.begin() + static_cast<std::ptrdiff_t>(keep));
        EXPECT_THROW(decode_model(cut), std::runtime_error);
    }
}

TEST(ModelFile, FuzzMutationsNeverCrash) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 77);
    const auto bytes = encode_model(cfg, params, Dtype::F16);
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 2000; ++trial) {
        auto mutated = bytes;
        const int flips = 1 + static_cast<int>(rng() % 8);
        for (int f = 0; f < flips; ++f)
            mutated[rng() % mutated.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        if (rng() % 4 == 0) mutated.resize(rng() % (mutated.size() + 1));
        try {
            (void)decode_model(mutated);
        } catch (const std::runtime_error&) {
            // typed failure is the contract; anything else escapes and fails
        }
    }
    SUCCEED();
}

// --- size accounting ---------------------------------------------------------

TEST(SizeReport, AccountingIdentity) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 3);
    for (Dtype d : {Dtype::F32, Dtype::F16}) {
        const auto bytes = encode_model(cfg, params, d);
        const auto rep = size_report(bytes);
        EXPECT_EQ(rep.total, bytes.size());
        EXPECT_EQ(rep.header + rep.payload_total() + rep.checksum, rep.total);
    }
}

TEST(SizeReport, F16PayloadExactlyHalf) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 3);
    const auto r32 = size_report(encode_model(cfg, params, Dtype::F32));
    const auto r16 = size_report(encode_model(cfg, params, Dtype::F16));
    EXPECT_EQ(payload_bytes(r16) * 2, payload_bytes(r32));
}

TEST(SizeReport, DefaultModelUnder300KbAndSmallHeader) {
    nn::ModelConfig cfg; // defaults: 12 channels
    auto params = nn::init_params(cfg, 1);
    const auto bytes = encode_model(cfg, params, Dtype::F32);
    EXPECT_LT(bytes.size(), 300u * 1024u);
    const auto rep = size_report(bytes);
    EXPECT_LT(rep.header, 1024u);

    const auto bytes16 = encode_model(cfg, params, Dtype::F16);
    EXPECT_LT(static_cast<double>(bytes16.size()), 0.6 * static_cast<double>(bytes.size()));
}

// --- checkpoint --------------------------------------------------------------

TEST(Checkpoint, LargerThanDeployedModel) {
    const auto cfg = small_config();
    auto params = nn::init_params(cfg, 11);
    auto adam = nn::make_adam_state(params);
    std::vector<nn::EpochStats> history(20);
    const auto ckpt = encode_checkpoint(cfg, params, adam, history);
    const auto f32 = encode_model(cfg, params, Dtype::F32);
    const auto f16 = encode_model(cfg, params, Dtype::F16);
    EXPECT_GT(ckpt.size(), f32.size());
    EXPECT_GT(ckpt.size(), f16.size());
    EXPECT_EQ(ckpt[0], 'E');
    EXPECT_EQ(ckpt[3], 'C');
}
