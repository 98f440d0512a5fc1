#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "retino/imgproc.hpp"

using namespace retino;
using namespace retino::img;

namespace {

std::vector<Point2> base_points() {
    return {{0.0, 0.0}, {100.0, 0.0}, {100.0, 80.0}, {0.0, 80.0}, {37.0, 22.0}};
}

std::vector<Point2> apply_all(const Homography& h, const std::vector<Point2>& pts) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(h.apply(p));
    return out;
}

double max_reprojection_error(const Homography& h, const std::vector<Point2>& src,
                              const std::vector<Point2>& dst) {
    double worst = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Point2 p = h.apply(src[i]);
        worst = std::max(worst, std::hypot(p.x - dst[i].x, p.y - dst[i].y));
    }
    return worst;
}

}  // namespace

TEST_CASE("identity correspondences") {
    const auto pts = base_points();
    const Homography h = estimate_homography(pts, pts);
    for (int i = 0; i < 9; ++i) {
        const double expected = (i % 4 == 0) ? 1.0 : 0.0;
        CHECK(std::abs(h.m[static_cast<std::size_t>(i)] - expected) < 1e-10);
    }
}

TEST_CASE("pure translation") {
    const auto src = base_points();
    std::vector<Point2> dst;
    for (const auto& p : src) dst.push_back({p.x + 10.0, p.y - 5.0});
    const Homography h = estimate_homography(src, dst);
    CHECK(std::abs(h.m[0] - 1.0) < 1e-10);
    CHECK(std::abs(h.m[2] - 10.0) < 1e-8);
    CHECK(std::abs(h.m[5] + 5.0) < 1e-8);
    CHECK(std::abs(h.m[6]) < 1e-12);
    CHECK(std::abs(h.m[7]) < 1e-12);
    CHECK(max_reprojection_error(h, src, dst) < 1e-8);
}

TEST_CASE("random projective recovery is exact for clean points") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> small(-2e-4, 2e-4);
    std::uniform_real_distribution<double> mid(-0.3, 0.3);
    const auto src = base_points();
    for (int trial = 0; trial < 25; ++trial) {
        Homography truth;
        truth.m = {1.0 + mid(rng), mid(rng) * 0.3, 40.0 * mid(rng),
                   mid(rng) * 0.3, 1.0 + mid(rng), 40.0 * mid(rng),
                   small(rng), small(rng), 1.0};
        const auto dst = apply_all(truth, src);
        const Homography est = estimate_homography(src, dst);
        CHECK(max_reprojection_error(est, src, dst) < 1e-6);
    }
}

TEST_CASE("noisy recovery stays under half a pixel") {
    std::mt19937 rng(7);
    std::normal_distribution<double> noise(0.0, 0.2);
    const auto src = base_points();
    Homography truth;
    truth.m = {1.05, 0.02, 12.0, -0.01, 0.97, -8.0, 1e-4, -5e-5, 1.0};
    const auto clean = apply_all(truth, src);

    std::vector<double> errors;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Point2> noisy = clean;
        for (auto& p : noisy) {
            p.x += noise(rng);
            p.y += noise(rng);
        }
        const Homography est = estimate_homography(src, noisy);
        double rms = 0.0;
        for (std::size_t i = 0; i < src.size(); ++i) {
            const Point2 p = est.apply(src[i]);
            rms += (p.x - clean[i].x) * (p.x - clean[i].x) +
                   (p.y - clean[i].y) * (p.y - clean[i].y);
        }
        errors.push_back(std::sqrt(rms / static_cast<double>(src.size())));
    }
    std::nth_element(errors.begin(), errors.begin() + 50, errors.end());
    CHECK(errors[50] < 0.5);
}

TEST_CASE("degenerate configurations") {
    // Three collinear among four.
    std::vector<Point2> src = {{0, 0}, {10, 0}, {20, 0}, {5, 0}};
    std::vector<Point2> dst = src;
    CHECK_THROWS_AS(estimate_homography(src, dst), Error);

    std::vector<Point2> three = {{0, 0}, {1, 0}, {0, 1}};
    CHECK_THROWS_AS(estimate_homography(three, three), Error);
}

TEST_CASE("homography inverse and determinant") {
    Homography h;
    h.m = {2.0, 0.1, 5.0, -0.2, 1.5, -3.0, 1e-4, 2e-4, 1.0};
    const Homography inv = h.inverse();
    const Point2 p{13.0, -4.0};
    const Point2 round_trip = inv.apply(h.apply(p));
    CHECK(std::abs(round_trip.x - p.x) < 1e-9);
    CHECK(std::abs(round_trip.y - p.y) < 1e-9);
    CHECK(h.det() != 0.0);
}

TEST_CASE("warp perspective") {
    ImageGray im(40, 30);
    std::mt19937 rng(4);
    for (auto& v : im.data) v = static_cast<std::uint8_t>(rng() % 256);

    SUBCASE("identity reproduces the image") {
        const auto out = warp_perspective(im, Homography::identity(), 40, 30);
        CHECK(out.data == im.data);
    }
    SUBCASE("translation shifts with zero fill") {
        Homography t;
        t.m = {1, 0, 6, 0, 1, 4, 0, 0, 1};  // src -> dst shift (+6, +4)
        const auto out = warp_perspective(im, t, 40, 30);
        CHECK(out.at(0, 0) == 0);
        CHECK(out.at(10, 10) == im.at(4, 6));
    }
    SUBCASE("warp then inverse warp is better than 30 dB inside") {
        // Smooth texture so bilinear resampling is Nyquist-friendly.
        ImageGray smooth(64, 48);
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 64; ++x)
                smooth.at(x, y) = static_cast<std::uint8_t>(
                    128 + 60 * std::sin(x * 0.25) * std::cos(y * 0.21));
        Homography h;
        h.m = {1.02, 0.03, 2.0, -0.02, 0.98, 1.0, 1e-4, -1e-4, 1.0};
        const auto warped = warp_perspective(smooth, h, 64, 48);
        const auto back = warp_perspective(warped, h.inverse(), 64, 48);
        double mse = 0.0;
        int n = 0;
        for (int y = 8; y < 40; ++y) {
            for (int x = 8; x < 56; ++x) {
                const double d = static_cast<double>(back.at(x, y)) - smooth.at(x, y);
                mse += d * d;
                ++n;
            }
        }
        mse /= n;
        const double psnr = 10.0 * std::log10(255.0 * 255.0 / std::max(1e-9, mse));
        CHECK(psnr > 30.0);
    }
}
