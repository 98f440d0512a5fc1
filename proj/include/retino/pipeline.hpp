#pragma once

#include <array>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "retino/frame_spec.hpp"
#include "retino/image.hpp"
#include "retino/imgproc.hpp"
#include "retino/optics.hpp"
#include "retino/robust.hpp"

namespace retino::pipeline {

struct PipelineConfig {
    double pixels_per_meter = 6000.0;  ///< rectified grid scale

    int median_kernel = 5;
    img::ClaheParams clahe{32, 2.0};
    double canny_lo_ratio = 0.4;

    double beam_intensity_floor = 0.55;  ///< fraction of full scale; Otsu below = no beam
    img::NlmParams beam_nlm{1, 3, 10.0};

    double reflex_column_fraction = 0.40;  ///< Purkinje rejection threshold
    double reflex_min_contrast = 0.08;     ///< min Otsu class-mean separation, fraction of scale
    int upsample_factor = 4;

    double neutral_threshold = 50.0;  ///< |r| beyond this reads as neutralization

    double huber_tuning = 1.345;
    int huber_iterations = 20;

    int min_pass_frames = 5;
    int min_beam_frames = 20;
    int velocity_window = 9;
    int scan_lines = 5;

    double pupil_hist_bin_px = 2.0;
    double pupil_gate_px = 6.0;
    double pupil_r_min_m = 0.0012;
    double pupil_r_max_m = 0.0056;
    double pupil_min_radius_m = 0.003;  ///< below this: PupilTooSmall

    double wd_min_m = 0.2;  ///< fiducial-estimated working distance accepted in [min, max]
    double wd_max_m = 0.8;

    double min_beam_disp_px = 2.0;
    int fiducial_history = 5;
    int jobs = 1;

    /// Swappable sub-pixel upsampler; bicubic when null.
    std::shared_ptr<const img::Upsampler> upsampler;
};

struct Roi {
    int x = 0, y = 0, w = 0, h = 0;
    bool contains(double px, double py) const {
        return px >= x && px < x + w && py >= y && py < y + h;
    }
};

struct FiducialObservation {
    img::Point2 center_px{};  ///< full-frame raw pixels
    double side_px = 0.0;     ///< vertical side length estimate (raw pixels)
    bool detected = false;    ///< measured this frame (false = interpolated)
    bool present = false;     ///< usable at all
};

struct FiducialFrame {
    std::array<FiducialObservation, 5> fiducials{};
    int n_detected = 0;
    Roi roi;

    int n_present() const {
        int n = 0;
        for (const auto& f : fiducials) n += f.present;
        return n;
    }
};

using FiducialHistory = std::deque<FiducialFrame>;

struct PupilCircle {
    double cx = 0.0, cy = 0.0, radius = 0.0;  ///< rectified pixels
};

struct BeamMeasure {
    std::optional<double> left_px, right_px;              ///< rectified x
    std::array<std::optional<double>, 5> center_rows{};   ///< per-row stripe centers

    std::optional<double> center() const {
        if (left_px && right_px) return 0.5 * (*left_px + *right_px);
        return std::nullopt;
    }
};

struct ReflexMeasure {
    std::optional<double> left_px, right_px;  ///< medians over scan lines, rectified x
    std::array<std::optional<double>, 5> left_lines{}, right_lines{};
};

/// Per-frame detections in perspective-corrected (rectified) coordinates.
struct FrameDetections {
    int frame_index = -1;
    std::array<img::Point2, 5> fiducials_px{};  ///< rectified
    std::array<bool, 5> fiducial_detected{};
    std::array<bool, 5> fiducial_present{};
    BeamMeasure beam;
    std::optional<PupilCircle> pupil;
    ReflexMeasure reflex;
    std::optional<double> working_distance_m;
    std::string drop_reason;  ///< empty when the frame contributed fully
};

enum class PassDirection { LeftToRight, RightToLeft };

struct PassSegment {
    int first_frame = 0, last_frame = 0;  ///< inclusive
    PassDirection direction = PassDirection::LeftToRight;

    int frame_count() const { return last_frame - first_frame + 1; }
};

enum class TrackedEdge { Left, Right };

struct PassTimestamps {
    int t1 = 0, t2 = 0;
    robust::LineFit reflex_fit;  ///< tracked edge position vs frame index
    robust::LineFit beam_fit;    ///< beam center vs frame index over [t1, t2]
    TrackedEdge edge = TrackedEdge::Left;
};

struct PassResult {
    PassSegment segment;
    PassTimestamps stamps;
    double ratio = 0.0;
    double power_d = 0.0;
    bool valid = false;
    std::string failure;  ///< error name when invalid
};

struct Diagnostics {
    int frames_total = 0;
    int roi_failed = 0;
    int fiducial_failed = 0;
    int beam_absent = 0;
    int pupil_failed = 0;
    int reflex_failed = 0;
    bool pupil_too_small = false;
    std::string wd_source;  ///< "fiducials" or "manifest"
};

struct AnalysisReport {
    std::optional<double> net_power_d;  ///< meridian 0; present with >= 2 valid passes
    std::vector<PassResult> passes;
    std::optional<optics::Movement> movement;
    std::optional<optics::Screening> screening;
    double working_distance_m = 0.0;
    Diagnostics diagnostics;
    std::string error;  ///< err_name when the session failed as a whole
    std::string error_message;
};

/// Mapping between ROI pixels, plane meters and the rectified grid. The
/// rectified image covers `window_m` at `ppm` pixels per meter, so rectified
/// pixel i sits at plane x = window.x0 + i / ppm.
struct Rectifier {
    img::Homography roi_to_plane;
    double ppm = 6000.0;
    RectM window_m{};
    int width_px = 0, height_px = 0;

    img::Point2 plane_to_rect(img::Point2 plane_m) const {
        return {(plane_m.x - window_m.x0) * ppm, (plane_m.y - window_m.y0) * ppm};
    }
    img::Point2 rect_to_plane(img::Point2 rect_px) const {
        return {window_m.x0 + rect_px.x / ppm, window_m.y0 + rect_px.y / ppm};
    }
    img::Point2 roi_to_rect(img::Point2 roi_px) const {
        return plane_to_rect(roi_to_plane.apply(roi_px));
    }
};

struct RectifiedFrame {
    img::ImageGray gray;
    img::ImageGray red;
    Rectifier geom;
};

// ---- stages ----------------------------------------------------------------

/// Paper-frame bounding box with 10% margin. With `prev`, the search is
/// restricted to prev expanded by 25% (whole frame as fallback). Throws
/// FrameNotFound when no fiducial-like quads exist anywhere.
Roi detect_roi(const img::ImageRGB& frame, const std::optional<Roi>& prev,
               const PipelineConfig& cfg);
Roi detect_roi_gray(const img::ImageGray& gray, const std::optional<Roi>& prev,
                    const PipelineConfig& cfg);

struct PreprocessedRoi {
    img::ImageGray gray;       ///< median-filtered
    img::ImageGray equalized;  ///< median-filtered + CLAHE
};

PreprocessedRoi preprocess_roi(const img::ImageGray& roi_gray, const PipelineConfig& cfg);

/// Quad candidates, pattern fit against the spec geometry, history-based
/// interpolation of missing fiducials and intensity-weighted sub-pixel
/// center refinement. Outputs full-frame pixel coordinates.
FiducialFrame detect_fiducials(const PreprocessedRoi& pre, const PaperFrameSpec& spec,
                               const FiducialHistory& history, const Roi& roi,
                               const PipelineConfig& cfg);

/// Interpolate missing fiducials of `frame` from history (motion compensated
/// by the commonly detected ones). Used by detect_fiducials and by the
/// sequential finalize step of analyze_video.
void interpolate_fiducials(FiducialFrame& frame, const FiducialHistory& history,
                           const PipelineConfig& cfg);

/// Homography from detected fiducials to the metric frame plane plus the
/// rectified gray/red images.
RectifiedFrame correct_perspective(const img::ImageGray& roi_gray, const img::ImageGray& roi_red,
                                   const FiducialFrame& fids, const PaperFrameSpec& spec,
                                   const PipelineConfig& cfg);

/// d = focal_px * fiducial_side / side_px, median over detected fiducials.
/// Returns nullopt when no fiducial was detected this frame.
std::optional<double> estimate_working_distance(const FiducialFrame& fids,
                                                const PaperFrameSpec& spec,
                                                const optics::OpticalSetup& setup);

/// Beam stripe edges in the beam search band; nullopt when the band shows no
/// beam (Otsu level under the intensity floor).
std::optional<BeamMeasure> detect_beam_edges(const RectifiedFrame& rect,
                                             const PaperFrameSpec& spec,
                                             const PipelineConfig& cfg);

/// Per-frame circle candidates in the reflex search space (rectified red).
std::vector<img::CircleHit> pupil_candidates(const RectifiedFrame& rect,
                                             const PaperFrameSpec& spec,
                                             const PipelineConfig& cfg);

/// Session-level 2D histogram of candidate centers (binned, origin at the
/// top-left fiducial position) used to reject per-frame false positives.
class PupilVoting {
public:
    PupilVoting(const Rectifier& geom, const PaperFrameSpec& spec, const PipelineConfig& cfg);

    void add(const std::vector<img::CircleHit>& candidates);
    /// Locate the histogram peak and the shared (median) radius.
    /// Throws PupilNotFound when no candidate was ever added.
    void finalize();

    bool finalized() const { return finalized_; }
    img::Point2 peak_center() const { return peak_; }
    double shared_radius_px() const { return shared_radius_; }

private:
    double bin_px_;
    double gate_px_;
    int bins_x_, bins_y_;
    img::Point2 origin_;
    std::vector<std::uint32_t> counts_;
    std::vector<img::CircleHit> all_;
    img::Point2 peak_{};
    double shared_radius_ = 0.0;
    bool finalized_ = false;
};

/// Candidate nearest the histogram peak with the shared radius. Throws
/// PupilNotFound when no candidate is close enough and PupilTooSmall when
/// the shared radius is under the metric floor.
PupilCircle detect_pupil(const std::vector<img::CircleHit>& candidates, const PupilVoting& voting,
                         double ppm, const PipelineConfig& cfg);

/// Sub-pixel reflex band edges inside the pupil: 4x upsampled crop, Otsu
/// binarization, Purkinje column rejection, gradient-weighted row centroids
/// on `scan_lines` rows across the central half of the pupil. Throws
/// ReflexNotFound when no column survives.
ReflexMeasure localize_reflex_edges(const RectifiedFrame& rect, const PupilCircle& pupil,
                                    const PipelineConfig& cfg);

/// Split the beam trajectory at robust velocity sign changes; segments
/// shorter than min_pass_frames are dropped. Throws NoPasses.
std::vector<PassSegment> segment_passes(const std::vector<FrameDetections>& frames,
                                        const PipelineConfig& cfg);

/// Pick (t1, t2) where the tracked reflex edge covers 25% and 75% of the
/// pupil diameter, constrained to the central half. Throws InsufficientTrack.
PassTimestamps select_timestamps(const PassSegment& pass,
                                 const std::vector<FrameDetections>& frames,
                                 const PupilCircle& pupil, const PipelineConfig& cfg);

/// Median displacement ratio over the scan lines between t1 and t2.
/// Throws ZeroBeamDisplacement when the beam moved less than min_beam_disp_px.
optics::MovementRatio measure_ratio(const PassSegment& pass, const PassTimestamps& stamps,
                                    const std::vector<FrameDetections>& frames,
                                    const PipelineConfig& cfg);

// ---- whole-session analysis -------------------------------------------------

struct SessionManifest {
    int schema_version = 1;
    double fps = 30.0;
    FrameSize size_code = FrameSize::Medium;
    optics::OpticalSetup setup;
    double meridian_deg = 0.0;
    std::string eye = "left";
};

/// Run every stage over the frame sequence. Stage failures are recorded in
/// diagnostics; the report carries an error only when fewer than two passes
/// survive (TooFewValidPasses) or the input is unusable.
AnalysisReport analyze_video(const std::vector<std::string>& frame_paths,
                             const SessionManifest& manifest, const PipelineConfig& cfg,
                             std::vector<FrameDetections>* detections_out = nullptr);

/// Convenience: session directory with manifest.json and frames/%06d.png.
AnalysisReport analyze_session(const std::string& session_dir, const PipelineConfig& cfg,
                               std::vector<FrameDetections>* detections_out = nullptr);

}  // namespace retino::pipeline
