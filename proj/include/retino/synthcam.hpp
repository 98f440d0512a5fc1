#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "retino/frame_spec.hpp"
#include "retino/image.hpp"
#include "retino/imgproc.hpp"
#include "retino/optics.hpp"

namespace retino::synth {

struct NoiseConfig {
    double sensor_sigma = 0.0;  ///< Gaussian sigma, fraction of full scale
    double jitter_px = 0.0;     ///< uniform +/- per-frame principal point shift
};

/// Complete description of one synthetic retinoscopy session. The output is
/// a pure function of this struct (seed included).
struct SceneConfig {
    double true_power_d = 0.0;
    optics::OpticalSetup setup;  ///< resolution and focal length live here
    pipeline::PaperFrameSpec frame_spec =
        pipeline::PaperFrameSpec::standard(pipeline::FrameSize::Medium);

    double camera_yaw_deg = 12.0;
    double fps = 30.0;
    int passes = 4;                      ///< alternating left-right sweeps
    double sweep_speed_mps = 0.014;      ///< beam speed on the frame plane
    double sweep_half_span_m = 0.0;      ///< 0 = half the search-space width
    double sweep_center_offset_m = 0.0;  ///< shift of the sweep center off the pupil axis

    double pupil_radius_m = 0.004;
    double iris_radius_m = 0.0065;
    double beam_width_m = 0.004;
    double reflex_width_m = 0.0024;
    double reflex_blur_px = 1.0;  ///< extra feather on the reflex band edges

    NoiseConfig noise;
    bool purkinje_enabled = false;
    double purkinje_radius_m = 0.0004;
    double purkinje_offset_x_m = 0.0012;
    double purkinje_offset_y_m = -0.0008;
    bool glare_enabled = false;   ///< beam glare saturates fiducials it crosses
    int distractor_frame = -1;    ///< frame index that carries a spurious bright ring

    std::uint64_t seed = 1;

    // Intensity anchors, fractions of full scale (red channel). The paper
    // leaves the absolute beam/reflex brightness unspecified.
    double beam_level = 0.95;
    double reflex_level = 0.62;
    double background_level = 0.04;
    double paper_level = 0.20;

    void validate() const;
    double sweep_half_span() const;
    double pass_duration_s() const;
    int frame_count() const;
    /// Pupil center in plane coordinates (center of the reflex search space).
    img::Point2 pupil_center_m() const;
};

/// Exact per-frame scene state, recorded before rasterization.
struct FrameTruth {
    int frame_index = 0;
    double beam_center_rel_m = 0.0;    ///< beam stripe center, relative to the pupil axis
    double reflex_center_rel_m = 0.0;  ///< reflex band center, relative to the pupil axis
    bool reflex_visible = false;       ///< band overlaps the pupil disc
    double beam_left_px = 0.0, beam_right_px = 0.0;      ///< raw image x
    double reflex_left_px = 0.0, reflex_right_px = 0.0;  ///< raw image x
    std::array<img::Point2, 5> fiducials_px{};
    img::Point2 pupil_center_px{};
    double jitter_x_px = 0.0, jitter_y_px = 0.0;
};

struct GroundTruth {
    double true_power_d = 0.0;
    double ratio_true = 0.0;  ///< forward ratio for true_power at the configured setup
    double pupil_radius_m = 0.0;
    img::Point2 pupil_center_m{};
    double reflex_width_m = 0.0;
    double beam_width_m = 0.0;
    std::vector<FrameTruth> frames;
};

/// Reflex position on the pupil plane for a beam at distance x from the
/// pupil axis: y = x * u f / ((f-d)(u+d)), both anchored to the axis.
double reflex_position_m(double beam_x_m, optics::NetPower p, const optics::OpticalSetup& s);

/// Plane->image homography for the configured camera (yaw + principal-point
/// jitter). Plane coordinates follow PaperFrameSpec (origin at the search
/// space top-left); the camera looks at the pupil center from distance d.
img::Homography plane_to_image(const SceneConfig& cfg, double jitter_x_px = 0.0,
                               double jitter_y_px = 0.0);

/// Pinhole projection of a plane point; at yaw 0 this is x_px = F_c * x / d
/// around the principal point.
img::Point2 project_to_image(img::Point2 plane_m, const SceneConfig& cfg);

/// Scene state for one frame (no rasterization).
FrameTruth frame_truth(const SceneConfig& cfg, int frame_index);

/// Rasterize one frame; deterministic for a fixed (config, index).
img::ImageRGB render_frame(const SceneConfig& cfg, int frame_index,
                           const FrameTruth* truth = nullptr);

GroundTruth compute_ground_truth(const SceneConfig& cfg);

/// Render the whole session into `out_dir` in the exact layout the pipeline
/// ingests: frames/%06d.png, manifest.json and ground_truth.json.
GroundTruth render_sequence(const SceneConfig& cfg, const std::string& out_dir, int jobs = 1);

}  // namespace retino::synth
