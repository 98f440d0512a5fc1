#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "retino/session_io.hpp"
#include "retino/synthcam.hpp"
#include "scene_helpers.hpp"

using namespace retino;
using namespace retino::synth;

namespace {

optics::OpticalSetup setup_ud(double u, double d) {
    optics::OpticalSetup s;
    s.u_m = u;
    s.d_m = d;
    s.focal_length_px = 3017.14;
    s.image_width_px = 3840;
    s.image_height_px = 2160;
    return s;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("reflex position on the pupil plane") {
    const auto s = setup_ud(0.4, 0.4);
    CHECK(reflex_position_m(0.001, {-2.0, 0.0}, s) == doctest::Approx(0.0025).epsilon(1e-9));
    CHECK(reflex_position_m(0.0, {-2.0, 0.0}, s) == 0.0);
    CHECK(reflex_position_m(0.001, {-4.0, 0.0}, s) ==
          doctest::Approx(-0.000833333).epsilon(1e-6));
}

TEST_CASE("pinhole projection at zero yaw") {
    auto cfg = testutil::test_scene(0.0, 3840, 2160);
    cfg.camera_yaw_deg = 0.0;
    const auto pupil = cfg.pupil_center_m();

    const img::Point2 principal = project_to_image(pupil, cfg);
    CHECK(principal.x == doctest::Approx((3840 - 1) / 2.0).epsilon(1e-12));
    CHECK(principal.y == doctest::Approx((2160 - 1) / 2.0).epsilon(1e-12));

    // 5 mm off axis at d = 0.35 with F_c ~= 3017 px lands ~43.1 px out.
    const img::Point2 p = project_to_image({pupil.x + 0.005, pupil.y}, cfg);
    CHECK(p.x - principal.x ==
          doctest::Approx(cfg.setup.focal_length_px * 0.005 / 0.35).epsilon(1e-12));
    CHECK(p.x - principal.x == doctest::Approx(43.1).epsilon(0.01));
}

TEST_CASE("yawed projection is an exact homography") {
    auto cfg = testutil::test_scene(0.0, 3840, 2160);
    cfg.camera_yaw_deg = 12.0;

    std::vector<img::Point2> plane_pts(cfg.frame_spec.fiducial_centers_m.begin(),
                                       cfg.frame_spec.fiducial_centers_m.end());
    std::vector<img::Point2> image_pts;
    for (const auto& p : plane_pts) image_pts.push_back(project_to_image(p, cfg));

    const img::Homography h = img::estimate_homography(plane_pts, image_pts);
    // Probe points away from the fiducials must agree too.
    for (const auto probe : {img::Point2{0.004, 0.011}, img::Point2{0.030, 0.002},
                             img::Point2{0.017, 0.019}}) {
        const img::Point2 direct = project_to_image(probe, cfg);
        const img::Point2 via_h = h.apply(probe);
        CHECK(std::abs(direct.x - via_h.x) < 1e-3);
        CHECK(std::abs(direct.y - via_h.y) < 1e-3);
    }
}

TEST_CASE("ground truth ratio equals the optics closed form") {
    for (double power : {-4.0, -2.0, 0.0, 1.5, 3.0}) {
        auto cfg = testutil::short_session(power);
        const GroundTruth gt = compute_ground_truth(cfg);
        const double want = optics::forward_ratio({power, 0.0}, cfg.setup).r;
        CHECK(gt.ratio_true == doctest::Approx(want).epsilon(1e-12));

        int checked = 0;
        for (std::size_t i = 1; i < gt.frames.size(); ++i) {
            const auto& a = gt.frames[i - 1];
            const auto& b = gt.frames[i];
            if (!a.reflex_visible || !b.reflex_visible) continue;
            const double dx = b.beam_center_rel_m - a.beam_center_rel_m;
            if (std::abs(dx) < 1e-7) continue;
            const double r = (b.reflex_center_rel_m - a.reflex_center_rel_m) / dx;
            CHECK(std::abs(r - want) < 1e-9);
            ++checked;
        }
        CHECK(checked > 0);
    }
}

TEST_CASE("rendered fiducial centroids match ground truth within 0.3 px") {
    // Default capture resolution; one clean frame.
    auto cfg = testutil::test_scene(0.0, 3840, 2160);
    const FrameTruth truth = frame_truth(cfg, 0);
    const img::ImageRGB frame = render_frame(cfg, 0, &truth);
    const img::ImageGray gray = img::to_gray_ccir601(frame);

    for (int k = 0; k < 5; ++k) {
        const img::Point2 gt = truth.fiducials_px[static_cast<std::size_t>(k)];
        const int half = 34;
        const int cx = static_cast<int>(std::lround(gt.x));
        const int cy = static_cast<int>(std::lround(gt.y));
        REQUIRE(cx - half >= 0);
        REQUIRE(cy - half >= 0);

        // Oracle: intensity-weighted centroid against the bright paper level.
        std::vector<std::uint8_t> vals;
        for (int y = cy - half; y <= cy + half; ++y)
            for (int x = cx - half; x <= cx + half; ++x) vals.push_back(gray.at(x, y));
        auto sorted = vals;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() * 4 / 5),
                         sorted.end());
        const double bg = sorted[sorted.size() * 4 / 5];
        double sw = 0.0, sx = 0.0, sy = 0.0;
        for (int y = cy - half; y <= cy + half; ++y) {
            for (int x = cx - half; x <= cx + half; ++x) {
                const double w = std::max(0.0, bg - gray.at(x, y));
                sw += w;
                sx += w * x;
                sy += w * y;
            }
        }
        REQUIRE(sw > 0.0);
        CHECK(std::abs(sx / sw - gt.x) < 0.3);
        CHECK(std::abs(sy / sw - gt.y) < 0.3);
    }
}

TEST_CASE("a sweep that misses the pupil marks every frame reflex-absent") {
    auto cfg = testutil::short_session(-2.0);
    cfg.sweep_center_offset_m = 0.05;
    const GroundTruth gt = compute_ground_truth(cfg);
    for (const auto& f : gt.frames) CHECK_FALSE(f.reflex_visible);
}

TEST_CASE("same seed renders bit-identical frames") {
    auto cfg = testutil::test_scene(-2.0, 480, 270);
    cfg.noise.sensor_sigma = 6.0 / 255.0;
    cfg.noise.jitter_px = 2.0;
    const auto a = render_frame(cfg, 7);
    const auto b = render_frame(cfg, 7);
    CHECK(a.data == b.data);

    auto other = cfg;
    other.seed = cfg.seed + 1;
    CHECK(render_frame(other, 7).data != a.data);
}

TEST_CASE("render_sequence is reproducible byte for byte") {
    namespace fs = std::filesystem;
    auto cfg = testutil::test_scene(-1.0, 320, 180);
    cfg.passes = 1;
    cfg.sweep_speed_mps = 0.07;  // ~15 frames
    cfg.noise.sensor_sigma = 4.0 / 255.0;
    cfg.noise.jitter_px = 1.0;

    const fs::path root = fs::temp_directory_path() / "retino_synth_repro";
    fs::remove_all(root);
    const auto gt1 = render_sequence(cfg, (root / "a").string(), 2);
    const auto gt2 = render_sequence(cfg, (root / "b").string(), 1);
    REQUIRE(gt1.frames.size() == gt2.frames.size());
    REQUIRE(gt1.frames.size() >= 10);

    for (std::size_t i = 0; i < gt1.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        CHECK(read_bytes(root / "a" / "frames" / name) == read_bytes(root / "b" / "frames" / name));
    }
    CHECK(read_bytes(root / "a" / "ground_truth.json") ==
          read_bytes(root / "b" / "ground_truth.json"));
    CHECK(read_bytes(root / "a" / "manifest.json") == read_bytes(root / "b" / "manifest.json"));

    // The sidecar round-trips through JSON.
    const auto loaded = io::read_ground_truth((root / "a" / "ground_truth.json").string());
    CHECK(loaded.true_power_d == doctest::Approx(gt1.true_power_d));
    CHECK(loaded.frames.size() == gt1.frames.size());
    CHECK(loaded.frames[3].beam_center_rel_m ==
          doctest::Approx(gt1.frames[3].beam_center_rel_m));
    fs::remove_all(root);
}

TEST_CASE("config validation") {
    auto cfg = testutil::test_scene(0.0);
    CHECK_NOTHROW(cfg.validate());

    auto singular = cfg;
    singular.true_power_d = optics::singularity_power(cfg.setup.d_m);
    CHECK_THROWS_AS(singular.validate(), Error);

    auto bad = cfg;
    bad.pupil_radius_m = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);

    auto inverted = cfg;
    inverted.iris_radius_m = inverted.pupil_radius_m * 0.5;
    CHECK_THROWS_AS(inverted.validate(), Error);
}

TEST_CASE("frame counts follow passes and sweep speed") {
    auto cfg = testutil::test_scene(0.0);
    // Defaults: half span 17.5 mm, speed 14 mm/s -> 2.5 s per pass, 4 passes.
    CHECK(cfg.pass_duration_s() == doctest::Approx(2.5));
    CHECK(cfg.frame_count() == 300);
}
