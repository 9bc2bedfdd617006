#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "promptsr/metrics.hpp"

#include "image_oracles.hpp"

using namespace promptsr;
using data::ImageBuffer;

namespace {

ImageBuffer random_image(int w, int h, uint64_t seed, int lo = 0, int hi = 255) {
    Rng rng(seed);
    ImageBuffer img = ImageBuffer::create(w, h);
    for (auto& p : img.pixels) p = uint8_t(lo + rng.below(hi - lo + 1));
    return img;
}

}  // namespace

TEST_CASE("psnr of identical images is infinite") {
    auto img = random_image(16, 16, 1);
    CHECK(std::isinf(metrics::psnr_y(img, img, 0)));
    CHECK(std::isinf(metrics::psnr_y(img, img, 2)));
}

TEST_CASE("psnr follows the log identity for constant Y offsets") {
    // +64 on every channel shifts Y by 64 * 219.859/256 uniformly
    ImageBuffer a = ImageBuffer::create(12, 12);
    ImageBuffer b = ImageBuffer::create(12, 12);
    for (auto& p : a.pixels) p = 32;
    for (auto& p : b.pixels) p = 96;
    const double dy = 64.0 * (65.738 + 129.057 + 25.064) / 256.0;
    const double want = 10.0 * std::log10(255.0 * 255.0 / (dy * dy));
    CHECK(std::fabs(metrics::psnr_y(a, b, 0) - want) < 1e-6);  // dB
}

TEST_CASE("psnr matches the direct-sum oracle and is symmetric") {
    auto a = random_image(20, 14, 2);
    auto b = random_image(20, 14, 3);
    for (int crop : {0, 2}) {
        CHECK(std::fabs(metrics::psnr_y(a, b, crop) - oracles::psnr_loop(a, b, crop)) < 1e-6);
        CHECK(metrics::psnr_y(a, b, crop) == doctest::Approx(metrics::psnr_y(b, a, crop)));
    }
}

TEST_CASE("psnr is invariant to a shared constant offset") {
    auto a = random_image(10, 10, 4, 40, 180);
    auto b = random_image(10, 10, 5, 40, 180);
    ImageBuffer a2 = a, b2 = b;
    for (auto& p : a2.pixels) p += 20;
    for (auto& p : b2.pixels) p += 20;
    CHECK(metrics::psnr_y(a, b, 0) == doctest::Approx(metrics::psnr_y(a2, b2, 0)).epsilon(1e-6));
}

TEST_CASE("psnr input validation") {
    auto a = random_image(8, 8, 6);
    auto b = random_image(9, 8, 7);
    CHECK_THROWS_AS(metrics::psnr_y(a, b, 0), ContractError);
    CHECK_THROWS_AS(metrics::psnr_y(a, a, 4), ContractError);
}

TEST_CASE("ssim of identical images is one") {
    auto img = random_image(24, 24, 8);
    CHECK(metrics::ssim_y(img, img, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim of an inverted mid-contrast image is low") {
    Rng rng(9);
    ImageBuffer a = ImageBuffer::create(32, 32);
    for (auto& p : a.pixels) p = uint8_t(64 + rng.below(128));
    ImageBuffer inv = a;
    for (auto& p : inv.pixels) p = uint8_t(255 - p);
    CHECK(metrics::ssim_y(a, inv, 0) < 0.5);
}

TEST_CASE("ssim matches the sliding-window loop oracle") {
    auto a = random_image(32, 32, 10);
    auto b = random_image(32, 32, 11);
    CHECK(metrics::ssim_y(a, b, 0) == doctest::Approx(oracles::ssim_loop(a, b, 0)).epsilon(1e-6));
    // also on a structured pair: b = blurred-ish copy of a
    auto c = data::bicubic_resize(data::bicubic_resize(a, 16, 16), 32, 32);
    CHECK(metrics::ssim_y(a, c, 2) == doctest::Approx(oracles::ssim_loop(a, c, 2)).epsilon(1e-6));
}

TEST_CASE("ssim is invariant when both images are transformed identically") {
    auto a = random_image(26, 26, 12);
    auto b = random_image(26, 26, 13);
    const double base = metrics::ssim_y(a, b, 0);
    for (int aug = 1; aug < 8; ++aug)
        CHECK(metrics::ssim_y(data::augment(a, aug), data::augment(b, aug), 0) ==
              doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("ssim size validation") {
    auto tiny = random_image(10, 10, 14);
    CHECK_THROWS_AS(metrics::ssim_y(tiny, tiny, 0), ContractError);
    auto small = random_image(14, 14, 15);
    CHECK_THROWS_AS(metrics::ssim_y(small, small, 2), ContractError);
}

TEST_CASE("eval report CSV layout") {
    metrics::EvalReport rep;
    rep.entries.push_back({"a.ppm", 30.5, 0.9});
    rep.entries.push_back({"b.ppm", 29.5, 0.8});
    const auto csv = rep.to_csv();
    CHECK(csv.find("image,psnr,ssim\n") == 0);
    CHECK(csv.find("a.ppm,30.5") != std::string::npos);
    CHECK(csv.find("mean,30.0") != std::string::npos);
}
