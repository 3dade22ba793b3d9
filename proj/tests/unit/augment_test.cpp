#include "comicreid/augment.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace comicreid;

namespace {

ImageBuffer ramp4()
{
    ImageBuffer img(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            img.at(y, x, 0) = static_cast<float>(x / 3.0);
            img.at(y, x, 1) = static_cast<float>(y / 3.0);
            img.at(y, x, 2) = static_cast<float>((x + y) / 6.0);
        }
    return img;
}

ImageBuffer random_image(Rng& rng, int w, int h)
{
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageBuffer img(w, h);
    for (auto& v : img.data)
        v = u(rng);
    return img;
}

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b)
{
    REQUIRE(a.width == b.width);
    REQUIRE(a.height == b.height);
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, static_cast<double>(std::abs(a.data[i] - b.data[i])));
    return m;
}

} // namespace

TEST_CASE("uniform gray with colour jitter off normalises to zero")
{
    ImageBuffer gray(12, 9, 0.5f);
    Rng rng(3);
    AugmentConfig cfg{8, 0.08};
    for (int t = 0; t < 20; ++t) {
        StrongPlan plan = sample_strong_plan(gray, cfg, rng);
        plan.jitter.apply = false;
        const auto out = apply_strong(gray, plan, cfg);
        CHECK(out.width == 8);
        CHECK(out.height == 8);
        for (float v : out.data)
            CHECK(std::abs(v) < 1e-6);
    }
}

TEST_CASE("augmentation is deterministic for a seed")
{
    Rng src(5);
    const auto img = random_image(src, 17, 11);
    AugmentConfig cfg{9, 0.2};
    Rng a(42), b(42), c(43);
    const auto sa = strong_augment(img, cfg, a), sb = strong_augment(img, cfg, b), sc = strong_augment(img, cfg, c);
    CHECK(sa.data == sb.data);
    CHECK(sa.data != sc.data);
    const auto wa = weak_augment(img, cfg, a), wb = weak_augment(img, cfg, b);
    CHECK(wa.data == wb.data);
}

TEST_CASE("strong augmentation of a 4x4 ramp matches the recorded output")
{
    Rng rng(11);
    const auto out = strong_augment(ramp4(), AugmentConfig{4, 0.08}, rng);
    const auto path = testsupport::fixture("strong_ramp_golden.txt");
    if (std::getenv("COMICREID_WRITE_GOLDEN")) {
        std::ofstream f(path);
        f.precision(9);
        for (float v : out.data)
            f << v << '\n';
    }
    std::ifstream f(path);
    REQUIRE(f.good());
    std::vector<float> golden;
    for (float v; f >> v;)
        golden.push_back(v);
    REQUIRE(golden.size() == out.data.size());
    for (std::size_t i = 0; i < golden.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(golden[i]).epsilon(1e-6));
}

TEST_CASE("weak pipeline resizes the longest side and pads with black")
{
    ImageBuffer img(4, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = 0.25f * static_cast<float>(x) + 0.1f * static_cast<float>(c);
    const auto small = longest_max_size(img, 2);
    CHECK(small.width == 2);
    CHECK(small.height == 1);
    CHECK(small.at(0, 0, 0) == doctest::Approx(0.125));
    CHECK(small.at(0, 1, 0) == doctest::Approx(0.625));

    WeakPlan off;
    const auto out = apply_weak(img, off, AugmentConfig{2, 0.2});
    REQUIRE(out.width == 2);
    REQUIRE(out.height == 2);
    for (int x = 0; x < 2; ++x)
        for (int c = 0; c < 3; ++c) {
            CHECK(out.at(0, x, c) == doctest::Approx(2 * small.at(0, x, c) - 1));
            CHECK(out.at(1, x, c) == doctest::Approx(-1.0)); // black after normalisation
        }
}

TEST_CASE("weak pipeline with every branch off only normalises an N x N input")
{
    Rng rng(8);
    const auto img = random_image(rng, 6, 6);
    const auto out = apply_weak(img, WeakPlan{}, AugmentConfig{6, 0.5});
    CHECK(max_abs_diff(out, normalize(img)) < 1e-7);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx((img.data[i] - 0.5) / 0.5));
}

TEST_CASE("flip is an involution and grayscale equalises channels")
{
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        const auto img = random_image(rng, 1 + static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 9));
        CHECK(hflip(hflip(img)).data == img.data);
        const auto g = to_grayscale(img);
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) {
                CHECK(g.at(y, x, 0) == g.at(y, x, 1));
                CHECK(g.at(y, x, 1) == g.at(y, x, 2));
            }
    }
}

TEST_CASE("blurs preserve constant images and the mean of the Gaussian kernel")
{
    ImageBuffer flat(7, 5, 0.3f);
    for (const auto& out : {gaussian_blur(flat, 9), box_blur(flat, 3), median_blur(flat, 3), motion_blur(flat, 5, 45),
                            shift_scale_rotate(flat, 0.05, -0.05, 1.05, 15.0)})
        CHECK(max_abs_diff(out, flat) < 1e-6);

    // a delta spreads into the 1-D kernel with sigma 1.7 for k = 9
    ImageBuffer delta(21, 1, 0.0f);
    for (int c = 0; c < 3; ++c)
        delta.at(0, 10, c) = 1.0f;
    const auto out = gaussian_blur(delta, 9);
    double total = 0.0;
    for (int i = -4; i <= 4; ++i)
        total += std::exp(-0.5 * i * i / (1.7 * 1.7));
    for (int i = -4; i <= 4; ++i)
        CHECK(out.at(0, 10 + i, 0) == doctest::Approx(std::exp(-0.5 * i * i / (1.7 * 1.7)) / total).epsilon(1e-6));
    CHECK(out.at(0, 5, 0) == 0.0f);
}

TEST_CASE("colour adjustments at identity factors leave images unchanged")
{
    Rng rng(10);
    const auto img = random_image(rng, 5, 4);
    CHECK(max_abs_diff(adjust_brightness(img, 1.0), img) < 1e-6);
    CHECK(max_abs_diff(adjust_contrast(img, 1.0), img) < 1e-6);
    CHECK(max_abs_diff(adjust_saturation(img, 1.0), img) < 1e-6);
    CHECK(max_abs_diff(adjust_hue(img, 0.0), img) < 1e-5);
    CHECK(max_abs_diff(adjust_hue(adjust_hue(img, 0.3), -0.3), img) < 1e-5);
    CHECK(max_abs_diff(adjust_saturation(img, 0.0), to_grayscale(img)) < 1e-6);
}

TEST_CASE("resized crop boxes stay inside the image")
{
    Rng rng(12);
    for (int t = 0; t < 500; ++t) {
        const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
        const auto box = sample_resized_crop(w, h, 0.08, rng);
        CHECK(box.width >= 1);
        CHECK(box.height >= 1);
        CHECK(box.left + box.width <= w);
        CHECK(box.top + box.height <= h);
    }
    CHECK_THROWS(sample_resized_crop(4, 4, 0.0, rng));
}

TEST_CASE("augmented outputs have the target size and lie in [-1, 1]")
{
    Rng rng(13);
    for (int t = 0; t < 30; ++t) {
        const auto img = random_image(rng, 3 + static_cast<int>(rng() % 20), 3 + static_cast<int>(rng() % 20));
        for (const auto& out : {strong_augment(img, AugmentConfig{8, 0.08}, rng), weak_augment(img, AugmentConfig{8, 0.2}, rng)}) {
            CHECK(out.width == 8);
            CHECK(out.height == 8);
            for (float v : out.data) {
                CHECK(v >= -1.0f - 1e-6f);
                CHECK(v <= 1.0f + 1e-6f);
            }
        }
    }
}

TEST_CASE("pool_grid averages cells and ppm round-trips")
{
    const auto img = ramp4();
    const auto pooled = pool_grid(img, 2);
    REQUIRE(pooled.size() == 12);
    CHECK(pooled(0) == doctest::Approx((0 + 1 / 3.0) / 2));
    CHECK(pooled(3 * 3 + 1) == doctest::Approx((2 / 3.0 + 1) / 2));

    testsupport::TempDir dir("ppm");
    write_ppm(img, dir / "ramp.ppm");
    const auto back = read_ppm(dir / "ramp.ppm");
    CHECK(back.width == 4);
    CHECK(max_abs_diff(back, img) < 0.5 / 255 + 1e-6);
    CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), DataError);
}
