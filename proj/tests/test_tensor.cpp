#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "aop/errors.hpp"
#include "aop/tensor.hpp"
#include "aop/tensor_io.hpp"

using namespace aop;

TEST(Tensor, SizeMatchesShape) {
    Tensor t({2, 3, 4}, 1.5f);
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.bytes(), 24u * sizeof(float));
    EXPECT_EQ(t.ndim(), 3u);
    for (float v : t.data()) EXPECT_EQ(v, 1.5f);
}

TEST(Tensor, RowMajorIndexing) {
    Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
    EXPECT_EQ(t(0, 2), 2.0f);
    EXPECT_EQ(t(1, 0), 3.0f);
    EXPECT_EQ(t(1, 2), 5.0f);
}

TEST(Tensor, ValueCountMismatchThrows) {
    EXPECT_THROW(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), DimensionError);
}

TEST(Tensor, ReshapeKeepsData) {
    Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
    Tensor r = t.reshaped({3, 2});
    EXPECT_EQ(r(2, 1), 5.0f);
    EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Tensor, AllFinite) {
    Tensor t({3}, {1.0f, 2.0f, 3.0f});
    EXPECT_TRUE(t.all_finite());
    t[1] = std::nanf("");
    EXPECT_FALSE(t.all_finite());
}

TEST(AllocStats, PeakCoversLargestTensor) {
    alloc::reset_peak();
    const std::size_t before = alloc::stats().current_bytes;
    {
        Tensor big({1000, 100});
        EXPECT_GE(alloc::stats().current_bytes, before + big.bytes());
    }
    const AllocStats s = alloc::stats();
    EXPECT_EQ(s.current_bytes, before);
    EXPECT_GE(s.peak_bytes, before + 1000 * 100 * sizeof(float));
    EXPECT_GE(s.peak_bytes, s.current_bytes);
}

TEST(AllocStats, ResetPeakRestartsAtCurrent) {
    { Tensor big({4096}); }
    const std::size_t base = alloc::reset_peak();
    EXPECT_EQ(alloc::stats().peak_bytes, base);
    { Tensor small({16}); }
    EXPECT_EQ(alloc::stats().peak_bytes, base + 16 * sizeof(float));
}

TEST(AllocStats, PeakIsMonotoneWithinScope) {
    alloc::reset_peak();
    std::size_t last = alloc::stats().peak_bytes;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        Tensor t({static_cast<std::size_t>(rng() % 500 + 1)});
        const std::size_t now = alloc::stats().peak_bytes;
        EXPECT_GE(now, last);
        last = now;
    }
}

TEST(TensorIO, RoundTripIsBitExact) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> u(-1e6f, 1e6f);
    Tensor t({3, 5, 7});
    for (auto& v : t.data()) v = u(rng);
    t[0] = -0.0f;
    t[1] = 1e-40f;  // subnormal
    const Tensor back = decode_tensor(encode_tensor(t));
    EXPECT_TRUE(bitwise_equal(t, back));
}

TEST(TensorIO, ByteLayout) {
    Tensor t({2}, {1.0f, -2.0f});
    const auto bytes = encode_tensor(t);
    const std::vector<std::uint8_t> expected = {'A', 'O', 'P', 'T', 1, 1, 2, 0, 0, 0,
                                                0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
    EXPECT_EQ(bytes, expected);
}

TEST(TensorIO, BadMagicThrows) {
    auto bytes = encode_tensor(Tensor({2}, {1.0f, 2.0f}));
    bytes[0] = 'X';
    EXPECT_THROW(decode_tensor(bytes), FormatError);
}

TEST(TensorIO, TruncatedPayloadThrows) {
    auto bytes = encode_tensor(Tensor({4}, {1, 2, 3, 4}));
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(decode_tensor(bytes), FormatError);
}

TEST(TensorIO, HugeDeclaredShapeDoesNotAllocate) {
    std::vector<std::uint8_t> bytes = {'A', 'O', 'P', 'T', 1, 2, 0xff, 0xff, 0xff, 0x7f, 0xff, 0xff, 0xff, 0x7f};
    EXPECT_THROW(decode_tensor(bytes), FormatError);
}

TEST(TensorIO, UnknownVersionThrows) {
    auto bytes = encode_tensor(Tensor({1}, {1.0f}));
    bytes[4] = 2;
    EXPECT_THROW(decode_tensor(bytes), FormatError);
}
