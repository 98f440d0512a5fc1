#include "retino/synthcam.hpp"

#include <cmath>
#include <filesystem>
#include <random>

#include "retino/parallel.hpp"
#include "retino/session_io.hpp"

namespace retino::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::mt19937_64 frame_rng(std::uint64_t seed, int frame_index) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(frame_index) + 1)));
}

struct Rgb {
    double r = 0.0, g = 0.0, b = 0.0;
};

Rgb mix(const Rgb& a, const Rgb& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

/// Coverage of interval [lo, hi] by a box filter of width w centered at x.
double cov1d(double x, double lo, double hi, double w) {
    const double left = std::max(lo, x - 0.5 * w);
    const double right = std::min(hi, x + 0.5 * w);
    return std::clamp((right - left) / w, 0.0, 1.0);
}

double cov_rect(double x, double y, const pipeline::RectM& r, double wx, double wy) {
    return cov1d(x, r.x0, r.x1, wx) * cov1d(y, r.y0, r.y1, wy);
}

double cov_circle(double dx, double dy, double radius, double w) {
    const double d = std::hypot(dx, dy);
    return std::clamp((radius - d) / w + 0.5, 0.0, 1.0);
}

struct Palette {
    Rgb background, paper_amb, paper_lit, fid_amb, fid_lit, skin_amb, skin_lit, iris_amb,
        iris_lit, pupil, reflex, purkinje, glare, ring;
};

Palette make_palette(const SceneConfig& cfg) {
    Palette p;
    const double bg = cfg.background_level;
    const double paper = cfg.paper_level;
    p.background = {bg, bg, bg * 1.2};
    p.paper_amb = {paper, paper * 0.98, paper * 0.93};
    p.paper_lit = {cfg.beam_level, cfg.beam_level * 0.74, cfg.beam_level * 0.30};
    p.fid_amb = {0.050, 0.050, 0.052};
    p.fid_lit = {0.180, 0.140, 0.075};
    p.skin_amb = {0.130, 0.105, 0.085};
    p.skin_lit = {0.760, 0.560, 0.300};
    p.iris_amb = {0.160, 0.120, 0.085};
    p.iris_lit = {0.520, 0.360, 0.160};
    p.pupil = {0.030, 0.024, 0.020};
    p.reflex = {cfg.reflex_level, cfg.reflex_level * 0.45, cfg.reflex_level * 0.16};
    p.purkinje = {0.950, 0.940, 0.900};
    p.glare = {0.950, 0.900, 0.800};
    p.ring = {0.700, 0.350, 0.140};
    return p;
}

}  // namespace

void SceneConfig::validate() const {
    setup.validate();
    frame_spec.validate();
    if (!(fps > 0.0)) raise(Err::ConfigInvalid, "fps must be positive");
    if (passes < 1) raise(Err::ConfigInvalid, "need at least one pass");
    if (!(sweep_speed_mps > 0.0)) raise(Err::ConfigInvalid, "sweep speed must be positive");
    if (!(pupil_radius_m > 0.0) || !(iris_radius_m > pupil_radius_m))
        raise(Err::ConfigInvalid, "need 0 < pupil radius < iris radius");
    if (!(beam_width_m > 0.0) || !(reflex_width_m > 0.0))
        raise(Err::ConfigInvalid, "beam and reflex widths must be positive");
    if (!(sweep_half_span() > 0.0)) raise(Err::ConfigInvalid, "sweep span must be positive");
    if (noise.sensor_sigma < 0.0 || noise.jitter_px < 0.0)
        raise(Err::ConfigInvalid, "noise parameters must be non-negative");
    if (std::abs(1.0 + setup.d_m * true_power_d) < 1e-6)
        raise(Err::ConfigInvalid, "true power sits on the neutralization singularity");
}

double SceneConfig::sweep_half_span() const {
    return sweep_half_span_m > 0.0 ? sweep_half_span_m : frame_spec.reflex_search_w_m / 2.0;
}

double SceneConfig::pass_duration_s() const { return 2.0 * sweep_half_span() / sweep_speed_mps; }

int SceneConfig::frame_count() const {
    return std::max(1, static_cast<int>(std::lround(passes * pass_duration_s() * fps)));
}

img::Point2 SceneConfig::pupil_center_m() const {
    return {frame_spec.reflex_search_w_m / 2.0, frame_spec.reflex_search_h_m / 2.0};
}

double reflex_position_m(double beam_x_m, optics::NetPower p, const optics::OpticalSetup& s) {
    return beam_x_m * optics::forward_ratio(p, s).r;
}

img::Homography plane_to_image(const SceneConfig& cfg, double jitter_x_px, double jitter_y_px) {
    const double theta = cfg.camera_yaw_deg * kPi / 180.0;
    const double f = cfg.setup.focal_length_px;
    const double cx = (cfg.setup.image_width_px - 1) / 2.0 + jitter_x_px;
    const double cy = (cfg.setup.image_height_px - 1) / 2.0 + jitter_y_px;
    const img::Point2 pupil = cfg.pupil_center_m();
    const double ct = std::cos(theta), st = std::sin(theta);

    // World frame: camera at origin looking along +z, pupil center on the
    // axis at distance d; the frame plane is yawed about the vertical axis.
    const double ow_x = -pupil.x * ct;
    const double ow_y = -pupil.y;
    const double ow_z = cfg.setup.d_m - pupil.x * st;

    img::Homography h;
    h.m = {f * ct + cx * st, 0.0, f * ow_x + cx * ow_z,
           cy * st,          f,   f * ow_y + cy * ow_z,
           st,               0.0, ow_z};
    const double s = h.m[8];
    if (std::abs(s) < 1e-12) raise(Err::ConfigInvalid, "camera behind the frame plane");
    for (auto& v : h.m) v /= s;
    return h;
}

img::Point2 project_to_image(img::Point2 plane_m, const SceneConfig& cfg) {
    return plane_to_image(cfg).apply(plane_m);
}

namespace {

double beam_rel_position(const SceneConfig& cfg, int frame_index) {
    const double amp = cfg.sweep_half_span();
    const double tau = (frame_index / cfg.fps) / cfg.pass_duration_s();
    int pass = static_cast<int>(std::floor(tau));
    double s = tau - pass;
    if (pass >= cfg.passes) {
        pass = cfg.passes - 1;
        s = 1.0;
    }
    const double x = (pass % 2 == 0) ? (-amp + 2.0 * amp * s) : (amp - 2.0 * amp * s);
    return cfg.sweep_center_offset_m + x;
}

std::pair<double, double> frame_jitter(const SceneConfig& cfg, int frame_index,
                                       std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double jx = u(rng) * cfg.noise.jitter_px;
    const double jy = u(rng) * cfg.noise.jitter_px;
    (void)frame_index;
    return {jx, jy};
}

}  // namespace

FrameTruth frame_truth(const SceneConfig& cfg, int frame_index) {
    FrameTruth t;
    t.frame_index = frame_index;
    auto rng = frame_rng(cfg.seed, frame_index);
    std::tie(t.jitter_x_px, t.jitter_y_px) = frame_jitter(cfg, frame_index, rng);

    t.beam_center_rel_m = beam_rel_position(cfg, frame_index);
    t.reflex_center_rel_m =
        reflex_position_m(t.beam_center_rel_m, optics::NetPower{cfg.true_power_d, 0.0}, cfg.setup);
    t.reflex_visible =
        std::abs(t.reflex_center_rel_m) < cfg.pupil_radius_m + cfg.reflex_width_m / 2.0;

    const img::Homography h = plane_to_image(cfg, t.jitter_x_px, t.jitter_y_px);
    const img::Point2 pupil = cfg.pupil_center_m();
    auto project_x = [&](double plane_x) { return h.apply({plane_x, pupil.y}).x; };

    const double beam_cx = pupil.x + t.beam_center_rel_m;
    t.beam_left_px = project_x(beam_cx - cfg.beam_width_m / 2.0);
    t.beam_right_px = project_x(beam_cx + cfg.beam_width_m / 2.0);
    const double reflex_cx = pupil.x + t.reflex_center_rel_m;
    t.reflex_left_px = project_x(reflex_cx - cfg.reflex_width_m / 2.0);
    t.reflex_right_px = project_x(reflex_cx + cfg.reflex_width_m / 2.0);
    for (int i = 0; i < 5; ++i) t.fiducials_px[static_cast<std::size_t>(i)] =
        h.apply(cfg.frame_spec.fiducial_centers_m[static_cast<std::size_t>(i)]);
    t.pupil_center_px = h.apply(pupil);
    return t;
}

img::ImageRGB render_frame(const SceneConfig& cfg, int frame_index, const FrameTruth* truth) {
    FrameTruth local;
    if (!truth) {
        local = frame_truth(cfg, frame_index);
        truth = &local;
    }
    auto rng = frame_rng(cfg.seed, frame_index);
    // Consume the jitter draw so the noise stream stays aligned with
    // frame_truth regardless of who computed the truth.
    frame_jitter(cfg, frame_index, rng);

    const Palette pal = make_palette(cfg);
    const pipeline::PaperFrameSpec& spec = cfg.frame_spec;
    const img::Point2 pupil = cfg.pupil_center_m();
    const double beam_cx = pupil.x + truth->beam_center_rel_m;
    const double beam_lo = beam_cx - cfg.beam_width_m / 2.0;
    const double beam_hi = beam_cx + cfg.beam_width_m / 2.0;
    const double reflex_cx = pupil.x + truth->reflex_center_rel_m;
    const double reflex_lo = reflex_cx - cfg.reflex_width_m / 2.0;
    const double reflex_hi = reflex_cx + cfg.reflex_width_m / 2.0;
    const pipeline::RectM face{0.0, 0.0, spec.reflex_search_w_m, spec.reflex_search_h_m};

    // Fiducials saturated by beam glare this frame.
    std::array<bool, 5> glare_on{};
    if (cfg.glare_enabled) {
        for (int i = 0; i < 5; ++i) {
            const auto& c = spec.fiducial_centers_m[static_cast<std::size_t>(i)];
            glare_on[static_cast<std::size_t>(i)] =
                std::abs(beam_cx - c.x) < cfg.beam_width_m / 2.0 + spec.fiducial_side_m / 2.0;
        }
    }
    const bool distract = (frame_index == cfg.distractor_frame);
    const double ring_cx = pupil.x - 0.011;
    const double ring_cy = pupil.y - 0.004;
    const double ring_r = 0.0035;
    const double ring_halfwidth = 0.0005;

    const img::Homography h = plane_to_image(cfg, truth->jitter_x_px, truth->jitter_y_px);
    const img::Homography hinv = h.inverse();
    const auto& m = hinv.m;

    const int w = cfg.setup.image_width_px, hgt = cfg.setup.image_height_px;
    img::ImageRGB out(w, hgt);

    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sigma = cfg.noise.sensor_sigma;

    for (int v = 0; v < hgt; ++v) {
        double nx = m[1] * v + m[2];
        double ny = m[4] * v + m[5];
        double den = m[7] * v + m[8];
        for (int u = 0; u < w; ++u) {
            const double x = nx / den;
            const double y = ny / den;
            const double ax = std::max(1e-9, std::abs((m[0] * den - nx * m[6]) / (den * den)));
            const double ay = std::max(1e-9, std::abs((m[4] * den - ny * m[7]) / (den * den)));

            // Surface palette on the paper panel, beam as illumination.
            Rgb amb = pal.paper_amb, lit = pal.paper_lit;
            for (const auto& c : spec.fiducial_centers_m) {
                const double s2 = spec.fiducial_side_m / 2.0;
                const double fc = cov1d(x, c.x - s2, c.x + s2, ax) * cov1d(y, c.y - s2, c.y + s2, ay);
                if (fc > 0.0) {
                    amb = mix(amb, pal.fid_amb, fc);
                    lit = mix(lit, pal.fid_lit, fc);
                }
            }
            const double face_cov = cov_rect(x, y, face, ax, ay);
            if (face_cov > 0.0) {
                amb = mix(amb, pal.skin_amb, face_cov);
                lit = mix(lit, pal.skin_lit, face_cov);
                const double iris_cov = cov_circle(x - pupil.x, y - pupil.y, cfg.iris_radius_m, ax);
                if (iris_cov > 0.0) {
                    amb = mix(amb, pal.iris_amb, iris_cov);
                    lit = mix(lit, pal.iris_lit, iris_cov);
                }
            }
            const double beam_cov = cov1d(x, beam_lo, beam_hi, ax);
            Rgb col = mix(amb, lit, beam_cov);
            const double panel_cov = cov_rect(x, y, spec.panel_extent_m, ax, ay);
            col = mix(pal.background, col, panel_cov);

            // The pupil shows the reflex, not the beam.
            const double pupil_cov = cov_circle(x - pupil.x, y - pupil.y, cfg.pupil_radius_m, ax);
            if (pupil_cov > 0.0) {
                Rgb pup = pal.pupil;
                const double feather = ax * (1.0 + cfg.reflex_blur_px);
                const double reflex_cov = cov1d(x, reflex_lo, reflex_hi, feather);
                if (reflex_cov > 0.0) pup = mix(pup, pal.reflex, reflex_cov);
                if (cfg.purkinje_enabled) {
                    const double pc = cov_circle(x - (pupil.x + cfg.purkinje_offset_x_m),
                                                 y - (pupil.y + cfg.purkinje_offset_y_m),
                                                 cfg.purkinje_radius_m, ax);
                    if (pc > 0.0) pup = mix(pup, pal.purkinje, pc);
                }
                col = mix(col, pup, pupil_cov);
            }

            if (cfg.glare_enabled) {
                for (int i = 0; i < 5; ++i) {
                    if (!glare_on[static_cast<std::size_t>(i)]) continue;
                    const auto& c = spec.fiducial_centers_m[static_cast<std::size_t>(i)];
                    const double gc =
                        cov_circle(x - c.x, y - c.y, 1.5 * spec.fiducial_side_m, ax);
                    if (gc > 0.0) col = mix(col, pal.glare, gc);
                }
            }
            if (distract) {
                const double d = std::hypot(x - ring_cx, y - ring_cy);
                const double rc =
                    std::clamp((ring_halfwidth - std::abs(d - ring_r)) / ax + 0.5, 0.0, 1.0);
                if (rc > 0.0) col = mix(col, pal.ring, rc);
            }

            std::uint8_t* px = out.px(u, v);
            const double chan[3] = {col.r, col.g, col.b};
            for (int c = 0; c < 3; ++c) {
                double value = chan[c] * 255.0;
                if (sigma > 0.0) value += gauss(rng) * sigma * 255.0;
                px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
            }

            nx += m[0];
            ny += m[3];
            den += m[6];
        }
    }
    return out;
}

GroundTruth compute_ground_truth(const SceneConfig& cfg) {
    cfg.validate();
    GroundTruth gt;
    gt.true_power_d = cfg.true_power_d;
    gt.ratio_true = optics::forward_ratio(optics::NetPower{cfg.true_power_d, 0.0}, cfg.setup).r;
    gt.pupil_radius_m = cfg.pupil_radius_m;
    gt.pupil_center_m = cfg.pupil_center_m();
    gt.reflex_width_m = cfg.reflex_width_m;
    gt.beam_width_m = cfg.beam_width_m;
    const int n = cfg.frame_count();
    gt.frames.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) gt.frames.push_back(frame_truth(cfg, i));
    return gt;
}

GroundTruth render_sequence(const SceneConfig& cfg, const std::string& out_dir, int jobs) {
    const GroundTruth gt = compute_ground_truth(cfg);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "frames", ec);
    if (ec) raise(Err::Io, "cannot create output directory: " + out_dir);

    const int n = static_cast<int>(gt.frames.size());
    parallel_for(n, jobs, [&](int i) {
        const img::ImageRGB frame = render_frame(cfg, i, &gt.frames[static_cast<std::size_t>(i)]);
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.png", i);
        img::write_png((fs::path(out_dir) / "frames" / name).string(), frame);
    });

    pipeline::SessionManifest manifest;
    manifest.fps = cfg.fps;
    manifest.size_code = cfg.frame_spec.size_code;
    manifest.setup = cfg.setup;
    manifest.meridian_deg = 0.0;
    io::write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
    io::write_ground_truth((fs::path(out_dir) / "ground_truth.json").string(), gt);
    return gt;
}

}  // namespace retino::synth
