#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "retino/imgproc.hpp"

using namespace retino;
using namespace retino::img;

namespace {

/// Exhaustive inter-class-variance argmax, written independently of the
/// implementation (direct sums per candidate threshold).
int brute_force_otsu(const std::uint32_t hist[256]) {
    double best = -1.0;
    int best_t = 0;
    for (int t = 0; t < 256; ++t) {
        double w0 = 0.0, w1 = 0.0, s0 = 0.0, s1 = 0.0;
        for (int v = 0; v < 256; ++v) {
            if (v <= t) {
                w0 += hist[v];
                s0 += static_cast<double>(hist[v]) * v;
            } else {
                w1 += hist[v];
                s1 += static_cast<double>(hist[v]) * v;
            }
        }
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = s0 / w0, mu1 = s1 / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {
            best = var;
            best_t = t;
        }
    }
    return best_t;
}

ImageGray constant_image(int w, int h, std::uint8_t v) { return ImageGray(w, h, v); }

ImageGray vertical_step(int w, int h, int at, std::uint8_t left, std::uint8_t right) {
    ImageGray im(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) im.at(x, y) = x < at ? left : right;
    return im;
}

double mean_of(const ImageGray& im) {
    double s = 0.0;
    for (auto v : im.data) s += v;
    return s / static_cast<double>(im.size());
}

double stddev_of(const ImageGray& im) {
    const double m = mean_of(im);
    double s = 0.0;
    for (auto v : im.data) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(im.size()));
}

}  // namespace

TEST_CASE("ccir601 gray conversion") {
    ImageRGB im(3, 1);
    const std::uint8_t px[3][3] = {{255, 0, 0}, {255, 255, 255}, {0, 128, 0}};
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) im.px(i, 0)[c] = px[i][c];
    const ImageGray g = to_gray_ccir601(im);
    CHECK(g.at(0, 0) == 76);
    CHECK(g.at(1, 0) == 255);
    CHECK(g.at(2, 0) == 75);
}

TEST_CASE("gray of equal channels is identity") {
    ImageRGB im(256, 1);
    for (int v = 0; v < 256; ++v)
        for (int c = 0; c < 3; ++c) im.px(v, 0)[c] = static_cast<std::uint8_t>(v);
    const ImageGray g = to_gray_ccir601(im);
    for (int v = 0; v < 256; ++v) CHECK(g.at(v, 0) == v);
}

TEST_CASE("median filter") {
    SUBCASE("constant unchanged") {
        const auto im = constant_image(16, 12, 77);
        CHECK(median_filter(im, 5).data == im.data);
    }
    SUBCASE("impulse removed") {
        auto im = constant_image(15, 15, 0);
        im.at(7, 7) = 255;
        CHECK(median_filter(im, 5).at(7, 7) == 0);
    }
    SUBCASE("3x3 patch of 1..9 yields the median at center") {
        ImageGray im(3, 3);
        for (int i = 0; i < 9; ++i) im.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i + 1);
        CHECK(median_filter(im, 3).at(1, 1) == 5);
    }
    SUBCASE("idempotent on its own output for binary masks") {
        // Blob-like masks (the shape thresholding produces) are roots of the
        // 3x3 median after one pass.
        ImageGray shapes(48, 36, 0);
        for (int y = 6; y < 20; ++y)
            for (int x = 5; x < 22; ++x) shapes.at(x, y) = 255;
        for (int y = 0; y < 36; ++y)
            for (int x = 0; x < 48; ++x)
                if (std::hypot(x - 33.0, y - 24.0) <= 8.0) shapes.at(x, y) = 255;
        const auto once = median_filter(shapes, 3);
        const auto twice = median_filter(once, 3);
        CHECK(once.data == twice.data);
    }
    SUBCASE("binary images reach an exactly idempotent root") {
        std::mt19937 rng(7);
        ImageGray im(24, 18);
        for (auto& v : im.data) v = (rng() & 1) ? 255 : 0;
        ImageGray cur = im;
        int iterations = 0;
        for (; iterations < 60; ++iterations) {
            auto next = median_filter(cur, 3);
            if (next.data == cur.data) break;
            cur = std::move(next);
        }
        CHECK(iterations < 60);
        CHECK(median_filter(cur, 3).data == cur.data);
    }
    CHECK_THROWS_AS(median_filter(constant_image(8, 8, 0), 4), Error);
    CHECK_THROWS_AS(median_filter(constant_image(8, 8, 0), -1), Error);
}

TEST_CASE("clahe") {
    SUBCASE("constant maps to a single level") {
        const auto out = clahe(constant_image(64, 64, 90), {16, 2.0});
        const std::uint8_t level = out.at(0, 0);
        for (auto v : out.data) CHECK(v == level);
    }
    SUBCASE("uniform histogram with unlimited clip is near identity") {
        ImageGray im(256, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 256; ++x) im.at(x, y) = static_cast<std::uint8_t>(x);
        // A single tile covering the image and no clipping.
        const auto out = clahe(im, {4096, 0.0});
        for (int x = 0; x < 256; ++x)
            CHECK(std::abs(static_cast<int>(out.at(x, 8)) - x) <= 1);
    }
    SUBCASE("equal inputs at one location map equally across calls") {
        std::mt19937 rng(3);
        ImageGray im(64, 32);
        for (auto& v : im.data) v = static_cast<std::uint8_t>(rng() % 256);
        const auto a = clahe(im, {16, 2.0});
        const auto b = clahe(im, {16, 2.0});
        CHECK(a.data == b.data);
    }
    SUBCASE("two-level image maps each region to a level, monotone per tile") {
        ImageGray im(64, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 64; ++x) im.at(x, y) = x < 32 ? 50 : 200;
        const auto out = clahe(im, {32, 0.0});
        // At tile centers the mapping is pure per-tile equalization: a
        // constant tile maps to one level.
        const std::uint8_t left = out.at(8, 16);
        const std::uint8_t right = out.at(56, 16);
        CHECK(out.at(9, 16) == left);
        CHECK(out.at(55, 16) == right);
    }
}

TEST_CASE("canny") {
    SUBCASE("clean vertical step gives a single-pixel positive edge") {
        const auto im = vertical_step(40, 24, 20, 0, 255);
        const auto edges = canny(im, 40.0, 120.0);
        for (int y = 2; y < 22; ++y) {
            int count = 0;
            for (int x = 0; x < 40; ++x) {
                if (edges.at(x, y)) {
                    ++count;
                    CHECK(edges.gx_at(x, y) > 0.0f);
                }
            }
            CHECK(count == 1);
        }
    }
    SUBCASE("constant image is empty") {
        CHECK(canny(constant_image(32, 32, 128), 10, 30).count() == 0);
        CHECK(canny_auto(constant_image(32, 32, 128)).count() == 0);
    }
    SUBCASE("falling step carries a negative gradient") {
        const auto im = vertical_step(40, 24, 20, 255, 0);
        const auto edges = canny(im, 40.0, 120.0);
        bool any = false;
        for (int y = 2; y < 22; ++y)
            for (int x = 0; x < 40; ++x)
                if (edges.at(x, y)) {
                    any = true;
                    CHECK(edges.gx_at(x, y) < 0.0f);
                }
        CHECK(any);
    }
    CHECK_THROWS_AS(canny(constant_image(8, 8, 0), 30.0, 10.0), Error);
}

TEST_CASE("otsu threshold") {
    SUBCASE("two balanced modes") {
        std::uint32_t hist[256] = {0};
        hist[0] = 500;
        hist[255] = 500;
        CHECK(otsu_threshold(hist) == brute_force_otsu(hist));
    }
    SUBCASE("levels 50 and 200") {
        std::uint32_t hist[256] = {0};
        hist[50] = 100;
        hist[200] = 100;
        CHECK(otsu_threshold(hist) == brute_force_otsu(hist));
    }
    SUBCASE("single level is degenerate") {
        CHECK_THROWS_AS(otsu_threshold(constant_image(10, 10, 90)), Error);
    }
    SUBCASE("matches brute force on 200 random histograms") {
        std::mt19937 rng(42);
        for (int trial = 0; trial < 200; ++trial) {
            std::uint32_t hist[256] = {0};
            const int modes = 2 + static_cast<int>(rng() % 4);
            for (int m = 0; m < modes; ++m) {
                const int center = static_cast<int>(rng() % 256);
                const int spread = 1 + static_cast<int>(rng() % 30);
                const int mass = 50 + static_cast<int>(rng() % 2000);
                for (int k = 0; k < mass; ++k) {
                    const int v = std::clamp(
                        center + static_cast<int>(rng() % (2 * spread + 1)) - spread, 0, 255);
                    ++hist[v];
                }
            }
            CHECK(otsu_threshold(hist) == brute_force_otsu(hist));
        }
    }
    SUBCASE("mask restricts the histogram") {
        ImageGray im(4, 1);
        im.data = {0, 255, 7, 7};
        std::vector<std::uint8_t> mask = {1, 1, 0, 0};
        std::uint32_t hist[256] = {0};
        hist[0] = 1;
        hist[255] = 1;
        CHECK(otsu_threshold(im, &mask) == brute_force_otsu(hist));
    }
}

TEST_CASE("edge preserving denoise") {
    SUBCASE("constant unchanged in both modes") {
        const auto im = constant_image(24, 24, 99);
        CHECK(denoise_edge_preserving(im, DenoiseMode::Bilateral).data == im.data);
        CHECK(denoise_edge_preserving(im, DenoiseMode::NonLocalMeans).data == im.data);
    }
    SUBCASE("bilateral keeps a tall step edge") {
        // Step height 150 with range sigma 25: height >= 3 sigma, so the
        // filtered edge must retain >= 90% of its contrast.
        const auto im = vertical_step(40, 20, 20, 50, 200);
        const auto out = denoise_edge_preserving(im, DenoiseMode::Bilateral, {2.0, 25.0});
        const double contrast = static_cast<double>(out.at(30, 10)) - out.at(10, 10);
        CHECK(contrast >= 0.9 * 150.0);
    }
    SUBCASE("non-local means halves gaussian noise on a flat field") {
        std::mt19937 rng(11);
        std::normal_distribution<double> noise(0.0, 20.0);
        ImageGray im(48, 48);
        for (auto& v : im.data)
            v = static_cast<std::uint8_t>(std::clamp(std::lround(128.0 + noise(rng)), 0L, 255L));
        const double before = stddev_of(im);
        const auto out =
            denoise_edge_preserving(im, DenoiseMode::NonLocalMeans, {}, {1, 5, 18.0});
        CHECK(stddev_of(out) <= 0.5 * before);
    }
}

TEST_CASE("hough circles") {
    SUBCASE("clean rendered circle recovered within a pixel") {
        ImageGray im(200, 200, 20);
        for (int y = 0; y < 200; ++y)
            for (int x = 0; x < 200; ++x)
                if (std::hypot(x - 100.0, y - 100.0) <= 20.0) im.at(x, y) = 220;
        const auto edges = canny_auto(im);
        const auto hits = hough_circles(edges, 10, 30);
        REQUIRE_FALSE(hits.empty());
        CHECK(std::abs(hits[0].cx - 100.0) <= 1.0);
        CHECK(std::abs(hits[0].cy - 100.0) <= 1.0);
        CHECK(std::abs(hits[0].radius - 20.0) <= 1.0);
    }
    SUBCASE("empty edge map yields nothing") {
        CHECK(hough_circles(EdgeMap(50, 50), 5, 20).empty());
    }
    SUBCASE("two circles, larger perimeter first") {
        EdgeMap edges(200, 150);
        auto draw = [&](double cx, double cy, double r) {
            for (int a = 0; a < 720; ++a) {
                const double th = a * 3.14159265358979 / 360.0;
                const int x = static_cast<int>(std::lround(cx + r * std::cos(th)));
                const int y = static_cast<int>(std::lround(cy + r * std::sin(th)));
                if (x >= 0 && y >= 0 && x < 200 && y < 150)
                    edges.edge[static_cast<std::size_t>(y) * 200 + x] = 1;
            }
        };
        draw(60.0, 60.0, 12.0);
        draw(140.0, 80.0, 24.0);
        const auto hits = hough_circles(edges, 8, 30, 4);
        REQUIRE(hits.size() >= 2);
        CHECK(std::abs(hits[0].radius - 24.0) <= 1.0);
        CHECK(std::abs(hits[0].cx - 140.0) <= 1.0);
        CHECK(std::abs(hits[1].radius - 12.0) <= 1.0);
    }
    CHECK_THROWS_AS(hough_circles(EdgeMap(10, 10), 2, 20), Error);
}

TEST_CASE("bicubic upsample") {
    SUBCASE("constant stays constant at 4x") {
        const auto out = upsample(constant_image(6, 5, 123), 4);
        CHECK(out.width == 24);
        CHECK(out.height == 20);
        for (auto v : out.data) CHECK(v == 123);
    }
    SUBCASE("two-point ramp upsamples monotonically") {
        ImageGray im(2, 1);
        im.data = {0, 255};
        const auto out = upsample(im, 4);
        REQUIRE(out.width == 8);
        for (int x = 1; x < 8; ++x) CHECK(out.at(x, 0) >= out.at(x - 1, 0));
    }
    SUBCASE("step position preserved within one source pixel") {
        const auto im = vertical_step(32, 8, 16, 0, 200);
        const auto out = upsample(im, 4);
        // Half-maximum crossing in upsampled coordinates, mapped back.
        int crossing = -1;
        for (int x = 0; x < out.width; ++x)
            if (out.at(x, 16) >= 100) {
                crossing = x;
                break;
            }
        REQUIRE(crossing >= 0);
        const double src_x = upsampled_to_source(crossing, 4);
        CHECK(std::abs(src_x - 15.5) <= 1.0);
    }
    SUBCASE("mean preserved within 1%") {
        std::mt19937 rng(5);
        ImageGray im(20, 14);
        for (auto& v : im.data) v = static_cast<std::uint8_t>(40 + rng() % 170);
        const double m_in = mean_of(im);
        for (int factor : {2, 4}) {
            const auto out = upsample(im, factor);
            CHECK(std::abs(mean_of(out) - m_in) <= 0.01 * m_in);
        }
    }
    CHECK_THROWS_AS(upsample(constant_image(4, 4, 0), 3), Error);
}
