#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "promptsr/nn.hpp"

#include "oracles.hpp"

using namespace promptsr;

TEST_CASE("conv3x3 with impulse kernel reproduces its input") {
    Rng rng(1);
    auto x = Tensor::randn({6, 7, 3}, rng);
    auto w = Tensor::zeros({3, 3, 3, 3});
    for (int c = 0; c < 3; ++c) w.data()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0f;  // center tap
    auto y = nn::conv3x3(x, w, Tensor::zeros({3}));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("conv3x3 matches a direct 9-tap loop") {
    Rng rng(2);
    auto x = Tensor::randn({5, 4, 2}, rng);
    auto w = Tensor::randn({3, 2, 3, 3}, rng);
    auto b = Tensor::randn({3}, rng);
    auto y = nn::conv3x3(x, w, b);
    for (int yy = 0; yy < 5; ++yy)
        for (int xx = 0; xx < 4; ++xx)
            for (int co = 0; co < 3; ++co) {
                double acc = b.data()[co];
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sy = yy + ky - 1, sx = xx + kx - 1;
                        if (sy < 0 || sy >= 5 || sx < 0 || sx >= 4) continue;
                        for (int ci = 0; ci < 2; ++ci)
                            acc += double(x.data()[(sy * 4 + sx) * 2 + ci]) *
                                   double(w.data()[((co * 2 + ci) * 3 + ky) * 3 + kx]);
                    }
                CHECK(y.data()[(yy * 4 + xx) * 3 + co] == doctest::Approx(acc).epsilon(1e-5));
            }
}

TEST_CASE("pixel shuffle smallest case and inverse") {
    auto x = Tensor::from_vector({1, 1, 4}, {1, 2, 3, 4});
    auto y = nn::pixel_shuffle(x, 2);
    CHECK(y.shape() == Shape{2, 2, 1});
    CHECK(y.data()[0] == 1.0f);
    CHECK(y.data()[1] == 2.0f);
    CHECK(y.data()[2] == 3.0f);
    CHECK(y.data()[3] == 4.0f);

    Rng rng(3);
    auto r = Tensor::randn({4, 4, 8}, rng);
    auto back = nn::pixel_unshuffle(nn::pixel_shuffle(r, 2), 2);
    for (int64_t i = 0; i < r.numel(); ++i) CHECK(back.data()[i] == r.data()[i]);
}

TEST_CASE("pixel shuffle preserves the multiset of values") {
    Rng rng(4);
    auto x = Tensor::randn({3, 5, 12}, rng);
    auto y = nn::pixel_shuffle(x, 2);
    std::vector<float> a(x.data(), x.data() + x.numel());
    std::vector<float> b(y.data(), y.data() + y.numel());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
}

TEST_CASE("pixel shuffle rejects indivisible channels") {
    CHECK_THROWS_AS(nn::pixel_shuffle(Tensor::zeros({2, 2, 5}), 2), ShapeError);
}

TEST_CASE("window partition counts and round-trip") {
    CHECK(nn::window_partition(Tensor::zeros({16, 16, 1}), 16).shape() == Shape{1, 256, 1});
    CHECK(nn::window_partition(Tensor::zeros({32, 32, 3}), 16).dim(0) == 4);
    CHECK_THROWS_AS(nn::window_partition(Tensor::zeros({4, 4, 1}), 0), ConfigError);
    CHECK_THROWS_AS(nn::window_partition(Tensor::zeros({5, 4, 1}), 4), ShapeError);

    Rng rng(5);
    auto x = Tensor::randn({48, 32, 8}, rng);
    auto back = nn::window_merge(nn::window_partition(x, 16), 48, 32, 16);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);
}

TEST_CASE("average pooling: constants, arithmetic, oracle") {
    auto c = Tensor::full({8, 8, 2}, 3.25f);
    auto yc = nn::avg_pool_down(c, 4);
    CHECK(yc.shape() == Shape{2, 2, 2});
    for (int64_t i = 0; i < yc.numel(); ++i) CHECK(yc.data()[i] == doctest::Approx(3.25f));

    auto blk = Tensor::from_vector({2, 2, 1}, {1, 2, 3, 4});
    CHECK(nn::avg_pool_down(blk, 2).data()[0] == doctest::Approx(2.5f));

    CHECK_THROWS_AS(nn::avg_pool_down(blk, 0), ConfigError);

    Rng rng(6);
    auto x = Tensor::randn({64, 64, 4}, rng);
    auto y = nn::avg_pool_down(x, 8);
    std::vector<float> xv(x.data(), x.data() + x.numel());
    auto want = oracles::avgpool_loop(xv, 64, 64, 4, 8);
    for (int64_t i = 0; i < y.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("layer norm: constant token, symmetric token, oracle") {
    auto ln = nn::LayerNormT<float>::make(4);
    auto c = Tensor::full({1, 4}, 7.0f);
    auto yc = ln.forward(c);
    for (int i = 0; i < 4; ++i) CHECK(yc.data()[i] == doctest::Approx(0.0f).epsilon(1e-6));

    auto ln2 = nn::LayerNormT<float>::make(2);
    auto s = Tensor::from_vector({1, 2}, {1, -1});
    auto ys = ln2.forward(s);
    CHECK(ys.data()[0] == doctest::Approx(1.0f).epsilon(1e-3));
    CHECK(ys.data()[1] == doctest::Approx(-1.0f).epsilon(1e-3));

    Rng rng(7);
    auto x = Tensor::randn({1, 16}, rng);
    auto ln3 = nn::LayerNormT<float>::make(16);
    auto y = ln3.forward(x);
    std::vector<float> xv(x.data(), x.data() + 16), g(16, 1.0f), b(16, 0.0f);
    auto want = oracles::layernorm_loop(xv, g, b, nn::kLayerNormEps);
    for (int i = 0; i < 16; ++i) CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-5));

    CHECK_THROWS_AS(nn::layer_norm(x, Tensor::zeros({4}), Tensor::zeros({4})), ShapeError);
}

TEST_CASE("FFN with ratio 1 preserves channel count") {
    Rng rng(8);
    for (int c : {3, 8, 17}) {
        auto ffn = nn::FFNT<float>::make(c, 1, rng);
        auto x = Tensor::randn({5, c}, rng);
        CHECK(ffn.forward(x).shape() == Shape{5, c});
    }
}

TEST_CASE("reflect padding and crop round-trip") {
    Rng rng(9);
    auto x = Tensor::randn({5, 6, 2}, rng);
    auto padded = nn::pad_reflect_br(x, 8, 8);
    CHECK(padded.shape() == Shape{8, 8, 2});
    // padded interior equals the source
    auto back = nn::crop_tl(padded, 5, 6);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);
    // reflected row: row 5 mirrors row 4 (edge-inclusive)
    for (int c = 0; c < 2; ++c) CHECK(padded.data()[(5 * 8 + 0) * 2 + c] == x.data()[(4 * 6 + 0) * 2 + c]);
}

TEST_CASE("padding works even when the pad exceeds the source size") {
    auto x = Tensor::from_vector({2, 1, 1}, {1, 2});
    auto p = nn::pad_reflect_br(x, 7, 1);
    // symmetric extension of [1 2] is 1 2 | 2 1 | 1 2 ...
    const float want[7] = {1, 2, 2, 1, 1, 2, 2};
    for (int i = 0; i < 7; ++i) CHECK(p.data()[i] == want[i]);
}

TEST_CASE("relative position bias is a pure function of the offset") {
    Rng rng(10);
    auto rp = nn::RelPosBiasT<float>::make(3, 2, rng);
    auto b = rp.forward();  // [2, 9, 9]
    CHECK(b.shape() == Shape{2, 9, 9});
    // tokens (0,0)->(1,1) and (1,1)->(2,2) share the offset (-1,-1)
    const int i1 = 0, j1 = 4, i2 = 4, j2 = 8;
    for (int h = 0; h < 2; ++h)
        CHECK(b.data()[(h * 9 + i1) * 9 + j1] == b.data()[(h * 9 + i2) * 9 + j2]);
}

TEST_CASE("layer gradients match finite differences (double)") {
    oracles::GradProbe<double> probe(11);
    auto f = [](const std::vector<TensorT<double>>& in) {
        auto y = nn::conv3x3(in[0], in[1], in[2]);              // [4,4,4]
        y = nn::avg_pool_down(y, 2);                            // [2,2,4]
        y = nn::pixel_shuffle(nn::pad_reflect_br(y, 4, 4), 2);  // [8,8,1]
        auto t = reshape(y, Shape{64, 1});
        t = nn::linear(t, in[3], in[4]);  // [64,5]
        t = nn::layer_norm(t, in[5], in[6]);
        return mean(mul(nn::gelu(t), t));
    };
    probe.add({4, 4, 2});
    probe.add({4, 2, 3, 3});  // conv w
    probe.add({4});           // conv b
    probe.add({5, 1});        // linear w
    probe.add({5});           // linear b
    probe.add({5}, 1.0);      // ln gamma
    probe.add({5});           // ln beta
    CHECK(probe.max_rel_err(f) < 1e-5);
}
