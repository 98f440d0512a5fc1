#include <algorithm>
#include <cmath>
#include <filesystem>

#include "retino/parallel.hpp"
#include "retino/pipeline.hpp"
#include "retino/session_io.hpp"

namespace retino::pipeline {

namespace {

constexpr double kReflexFitBand = 0.80;  // fraction of pupil radius with clean edge samples

struct BeamSeries {
    std::vector<double> t;
    std::vector<double> x;
};

BeamSeries beam_series(const std::vector<FrameDetections>& frames, int first, int last) {
    BeamSeries s;
    for (const auto& f : frames) {
        if (f.frame_index < first || f.frame_index > last) continue;
        const auto c = f.beam.center();
        if (!c) continue;
        s.t.push_back(f.frame_index);
        s.x.push_back(*c);
    }
    return s;
}

std::optional<PupilCircle> session_pupil(const std::vector<FrameDetections>& frames) {
    std::vector<double> cx, cy, r;
    for (const auto& f : frames) {
        if (!f.pupil) continue;
        cx.push_back(f.pupil->cx);
        cy.push_back(f.pupil->cy);
        r.push_back(f.pupil->radius);
    }
    if (cx.empty()) return std::nullopt;
    return PupilCircle{robust::median(std::move(cx)), robust::median(std::move(cy)),
                       robust::median(std::move(r))};
}

std::optional<double> tracked_edge_value(const FrameDetections& f, TrackedEdge edge) {
    return edge == TrackedEdge::Left ? f.reflex.left_px : f.reflex.right_px;
}

std::optional<double> tracked_line_value(const FrameDetections& f, TrackedEdge edge, int line) {
    return edge == TrackedEdge::Left ? f.reflex.left_lines[static_cast<std::size_t>(line)]
                                     : f.reflex.right_lines[static_cast<std::size_t>(line)];
}

}  // namespace

std::vector<PassSegment> segment_passes(const std::vector<FrameDetections>& frames,
                                        const PipelineConfig& cfg) {
    const BeamSeries s = beam_series(frames, 0, frames.empty() ? 0 : frames.back().frame_index);
    if (static_cast<int>(s.t.size()) < cfg.min_beam_frames)
        raise(Err::NoPasses, "too few frames with beam detections");

    // Robust local velocity: Huber slope over a sliding sample window.
    const int n = static_cast<int>(s.t.size());
    const int half = std::max(2, cfg.velocity_window / 2);
    std::vector<double> velocity(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const int a = std::max(0, i - half);
        const int b = std::min(n - 1, i + half);
        const auto fit = robust::huber_line_fit(
            std::span<const double>(s.t.data() + a, static_cast<std::size_t>(b - a + 1)),
            std::span<const double>(s.x.data() + a, static_cast<std::size_t>(b - a + 1)),
            cfg.huber_tuning, cfg.huber_iterations);
        velocity[static_cast<std::size_t>(i)] = fit.valid ? fit.slope : 0.0;
    }

    std::vector<double> speed;
    speed.reserve(static_cast<std::size_t>(n));
    for (double v : velocity) speed.push_back(std::abs(v));
    const double v_floor = std::max(0.05, 0.15 * robust::median(std::move(speed)));

    std::vector<PassSegment> passes;
    int run_start = -1;
    int run_sign = 0;
    auto close_run = [&](int end_index) {
        if (run_start < 0) return;
        PassSegment seg;
        seg.first_frame = static_cast<int>(s.t[static_cast<std::size_t>(run_start)]);
        seg.last_frame = static_cast<int>(s.t[static_cast<std::size_t>(end_index)]);
        seg.direction = run_sign > 0 ? PassDirection::LeftToRight : PassDirection::RightToLeft;
        if (seg.frame_count() >= cfg.min_pass_frames && end_index - run_start + 1 >= cfg.min_pass_frames)
            passes.push_back(seg);
        run_start = -1;
        run_sign = 0;
    };
    for (int i = 0; i < n; ++i) {
        const double v = velocity[static_cast<std::size_t>(i)];
        const int sign = v > v_floor ? 1 : (v < -v_floor ? -1 : 0);
        if (sign == run_sign && sign != 0) continue;
        close_run(i - 1);
        if (sign != 0) {
            run_start = i;
            run_sign = sign;
        }
    }
    close_run(n - 1);

    if (passes.empty()) raise(Err::NoPasses, "no monotone beam sweep found");
    return passes;
}

PassTimestamps select_timestamps(const PassSegment& pass,
                                 const std::vector<FrameDetections>& frames,
                                 const PupilCircle& pupil, const PipelineConfig& cfg) {
    // Track whichever edge has the longer valid span within the pass.
    int span_left = 0, span_right = 0;
    for (const auto& f : frames) {
        if (f.frame_index < pass.first_frame || f.frame_index > pass.last_frame) continue;
        if (f.reflex.left_px) ++span_left;
        if (f.reflex.right_px) ++span_right;
    }
    const TrackedEdge edge = span_right > span_left ? TrackedEdge::Right : TrackedEdge::Left;

    std::vector<double> t, x;
    int with_beam = 0;
    for (const auto& f : frames) {
        if (f.frame_index < pass.first_frame || f.frame_index > pass.last_frame) continue;
        const auto v = tracked_edge_value(f, edge);
        if (!v) continue;
        if (std::abs(*v - pupil.cx) > kReflexFitBand * pupil.radius) continue;
        t.push_back(f.frame_index);
        x.push_back(*v);
        if (f.beam.center()) ++with_beam;
    }
    if (with_beam < cfg.min_pass_frames)
        raise(Err::InsufficientTrack, "too few frames track both reflex and beam");

    const auto fit = robust::huber_line_fit(t, x, cfg.huber_tuning, cfg.huber_iterations);
    if (!fit.valid || fit.slope == 0.0)
        raise(Err::InsufficientTrack, "reflex edge does not move within the pass");

    // Fraction of the pupil diameter covered by the fitted edge position.
    const double lo_x = pupil.cx - pupil.radius;
    auto frac_at = [&](int frame) { return (fit.eval(frame) - lo_x) / (2.0 * pupil.radius); };

    int t1 = -1, t2 = -1;
    if (fit.slope > 0.0) {
        for (int f = pass.first_frame; f <= pass.last_frame; ++f)
            if (frac_at(f) >= 0.25) {
                t1 = f;
                break;
            }
        for (int f = pass.last_frame; f >= pass.first_frame; --f)
            if (frac_at(f) <= 0.75) {
                t2 = f;
                break;
            }
    } else {
        for (int f = pass.first_frame; f <= pass.last_frame; ++f)
            if (frac_at(f) <= 0.75) {
                t1 = f;
                break;
            }
        for (int f = pass.last_frame; f >= pass.first_frame; --f)
            if (frac_at(f) >= 0.25) {
                t2 = f;
                break;
            }
    }
    if (t1 < 0 || t2 < 0 || t2 <= t1)
        raise(Err::InsufficientTrack, "edge never spans the 25%-75% pupil band");

    PassTimestamps out;
    out.t1 = t1;
    out.t2 = t2;
    out.reflex_fit = fit;
    out.edge = edge;
    const BeamSeries bs = beam_series(frames, t1, t2);
    out.beam_fit = robust::huber_line_fit(bs.t, bs.x, cfg.huber_tuning, cfg.huber_iterations);
    return out;
}

optics::MovementRatio measure_ratio(const PassSegment& pass, const PassTimestamps& stamps,
                                    const std::vector<FrameDetections>& frames,
                                    const PipelineConfig& cfg) {
    const auto pupil = session_pupil(frames);

    // Reflex displacement per scan line, median across lines.
    std::vector<double> reflex_disp;
    for (int line = 0; line < cfg.scan_lines && line < 5; ++line) {
        std::vector<double> t, x;
        for (const auto& f : frames) {
            if (f.frame_index < pass.first_frame || f.frame_index > pass.last_frame) continue;
            const auto v = tracked_line_value(f, stamps.edge, line);
            if (!v) continue;
            if (pupil && std::abs(*v - pupil->cx) > kReflexFitBand * pupil->radius) continue;
            t.push_back(f.frame_index);
            x.push_back(*v);
        }
        if (t.size() < 3) continue;
        const auto fit = robust::huber_line_fit(t, x, cfg.huber_tuning, cfg.huber_iterations);
        if (!fit.valid) continue;
        reflex_disp.push_back(fit.eval(stamps.t2) - fit.eval(stamps.t1));
    }
    double d_reflex;
    if (!reflex_disp.empty()) {
        d_reflex = robust::median(std::move(reflex_disp));
    } else if (stamps.reflex_fit.valid) {
        d_reflex = stamps.reflex_fit.eval(stamps.t2) - stamps.reflex_fit.eval(stamps.t1);
    } else {
        raise(Err::InsufficientTrack, "no reflex displacement measurable");
    }

    // Beam displacement per band row over [t1, t2], median across rows.
    std::vector<double> beam_disp;
    for (int row = 0; row < cfg.scan_lines && row < 5; ++row) {
        std::vector<double> t, x;
        for (const auto& f : frames) {
            if (f.frame_index < stamps.t1 || f.frame_index > stamps.t2) continue;
            const auto v = f.beam.center_rows[static_cast<std::size_t>(row)];
            if (!v) continue;
            t.push_back(f.frame_index);
            x.push_back(*v);
        }
        if (t.size() < 2) continue;
        const auto fit = robust::huber_line_fit(t, x, cfg.huber_tuning, cfg.huber_iterations);
        if (!fit.valid) continue;
        beam_disp.push_back(fit.eval(stamps.t2) - fit.eval(stamps.t1));
    }
    double d_beam;
    if (!beam_disp.empty()) {
        d_beam = robust::median(std::move(beam_disp));
    } else if (stamps.beam_fit.valid) {
        d_beam = stamps.beam_fit.eval(stamps.t2) - stamps.beam_fit.eval(stamps.t1);
    } else {
        raise(Err::ZeroBeamDisplacement, "no beam positions between t1 and t2");
    }

    if (std::abs(d_beam) < cfg.min_beam_disp_px)
        raise(Err::ZeroBeamDisplacement, "beam moved less than the displacement floor");
    return optics::MovementRatio{d_reflex / d_beam};
}

namespace {

struct FrameWork {
    bool roi_ok = false;
    Roi roi;
    img::ImageGray roi_gray;
    img::ImageGray roi_red;
    bool fids_ok = false;
    bool fids_need_retry = false;
    FiducialFrame fids;
    bool rect_ok = false;
    RectifiedFrame rect;
    std::vector<img::CircleHit> pupil_cands;
    bool beam_absent = false;
    bool reflex_failed = false;
    bool pupil_failed = false;
    FrameDetections det;
};

}  // namespace

AnalysisReport analyze_video(const std::vector<std::string>& frame_paths,
                             const SessionManifest& manifest, const PipelineConfig& cfg,
                             std::vector<FrameDetections>* detections_out) {
    AnalysisReport report;
    const int n = static_cast<int>(frame_paths.size());
    report.diagnostics.frames_total = n;
    if (n == 0) {
        report.error = err_name(Err::Io);
        report.error_message = "no frames in session";
        return report;
    }
    manifest.setup.validate();
    const PaperFrameSpec spec = PaperFrameSpec::standard(manifest.size_code);

    std::vector<FrameWork> work(static_cast<std::size_t>(n));

    // Stage 1 (sequential): ROI propagation.
    std::optional<Roi> prev;
    for (int i = 0; i < n; ++i) {
        auto& fw = work[static_cast<std::size_t>(i)];
        fw.det.frame_index = i;
        try {
            const img::ImageRGB frame = img::read_png_rgb(frame_paths[static_cast<std::size_t>(i)]);
            fw.roi = detect_roi(frame, prev, cfg);
            prev = fw.roi;
            const img::ImageRGB roi_rgb = frame.crop(fw.roi.x, fw.roi.y, fw.roi.w, fw.roi.h);
            fw.roi_gray = img::to_gray_ccir601(roi_rgb);
            fw.roi_red = img::extract_channel(roi_rgb, 0);
            fw.roi_ok = true;
        } catch (const Error& e) {
            fw.det.drop_reason = err_name(e.code());
        }
    }

    // Stage 2a (frame-parallel): fiducial detection without history.
    parallel_for(n, cfg.jobs, [&](int i) {
        auto& fw = work[static_cast<std::size_t>(i)];
        if (!fw.roi_ok) return;
        const PreprocessedRoi pre = preprocess_roi(fw.roi_gray, cfg);
        try {
            fw.fids = detect_fiducials(pre, spec, FiducialHistory{}, fw.roi, cfg);
            fw.fids_ok = true;
        } catch (const Error&) {
            fw.fids_need_retry = true;
        }
    });

    // Stage 2b (sequential): history interpolation and working distance.
    FiducialHistory history;
    for (int i = 0; i < n; ++i) {
        auto& fw = work[static_cast<std::size_t>(i)];
        if (!fw.roi_ok) continue;
        if (fw.fids_need_retry) {
            const PreprocessedRoi pre = preprocess_roi(fw.roi_gray, cfg);
            try {
                fw.fids = detect_fiducials(pre, spec, history, fw.roi, cfg);
                fw.fids_ok = true;
            } catch (const Error& e) {
                fw.det.drop_reason = err_name(e.code());
            }
        } else if (fw.fids_ok && fw.fids.n_detected < 5 && !history.empty()) {
            // Replace transform-predicted slots with history-based estimates.
            for (auto& obs : fw.fids.fiducials)
                if (!obs.detected) obs.present = false;
            interpolate_fiducials(fw.fids, history, cfg);
        }
        if (!fw.fids_ok) continue;
        if (const auto wd = estimate_working_distance(fw.fids, spec, manifest.setup))
            fw.det.working_distance_m = *wd;
        history.push_back(fw.fids);
        while (static_cast<int>(history.size()) > cfg.fiducial_history) history.pop_front();
    }

    // Stage 2c (frame-parallel): rectification, beam, pupil candidates.
    parallel_for(n, cfg.jobs, [&](int i) {
        auto& fw = work[static_cast<std::size_t>(i)];
        if (!fw.fids_ok) return;
        try {
            fw.rect = correct_perspective(fw.roi_gray, fw.roi_red, fw.fids, spec, cfg);
            fw.rect_ok = true;
        } catch (const Error& e) {
            fw.det.drop_reason = err_name(e.code());
            return;
        }
        for (int k = 0; k < 5; ++k) {
            const auto& obs = fw.fids.fiducials[static_cast<std::size_t>(k)];
            if (!obs.present) continue;
            fw.det.fiducials_px[static_cast<std::size_t>(k)] = fw.rect.geom.roi_to_rect(
                {obs.center_px.x - fw.roi.x, obs.center_px.y - fw.roi.y});
            fw.det.fiducial_present[static_cast<std::size_t>(k)] = true;
            fw.det.fiducial_detected[static_cast<std::size_t>(k)] = obs.detected;
        }
        if (const auto beam = detect_beam_edges(fw.rect, spec, cfg)) fw.det.beam = *beam;
        else fw.beam_absent = true;
        fw.pupil_cands = pupil_candidates(fw.rect, spec, cfg);
        fw.roi_gray = img::ImageGray{};
        fw.roi_red = img::ImageGray{};
    });

    // Stage 3 (sequential): session-level pupil voting.
    const FrameWork* first_rect = nullptr;
    for (const auto& fw : work)
        if (fw.rect_ok) {
            first_rect = &fw;
            break;
        }
    if (first_rect) {
        PupilVoting voting(first_rect->rect.geom, spec, cfg);
        for (const auto& fw : work)
            if (fw.rect_ok) voting.add(fw.pupil_cands);
        bool voting_ok = false;
        try {
            voting.finalize();
            voting_ok = true;
        } catch (const Error&) {
            // No pupil anywhere in the session.
        }
        if (voting_ok) {
            for (auto& fw : work) {
                if (!fw.rect_ok) continue;
                try {
                    fw.det.pupil = detect_pupil(fw.pupil_cands, voting, cfg.pixels_per_meter, cfg);
                } catch (const Error& e) {
                    fw.pupil_failed = true;
                    if (e.code() == Err::PupilTooSmall) report.diagnostics.pupil_too_small = true;
                }
            }
        } else {
            for (auto& fw : work)
                if (fw.rect_ok) fw.pupil_failed = true;
        }
    }

    // Stage 4 (frame-parallel): reflex edge localization.
    parallel_for(n, cfg.jobs, [&](int i) {
        auto& fw = work[static_cast<std::size_t>(i)];
        if (!fw.rect_ok || !fw.det.pupil) return;
        try {
            fw.det.reflex = localize_reflex_edges(fw.rect, *fw.det.pupil, cfg);
        } catch (const Error&) {
            fw.reflex_failed = true;
        }
    });

    // Stage 5 (sequential): diagnostics, working distance, passes, aggregate.
    std::vector<FrameDetections> detections;
    detections.reserve(static_cast<std::size_t>(n));
    std::vector<double> wd_estimates;
    for (auto& fw : work) {
        if (!fw.roi_ok) ++report.diagnostics.roi_failed;
        else if (!fw.fids_ok || !fw.rect_ok) ++report.diagnostics.fiducial_failed;
        if (fw.beam_absent) ++report.diagnostics.beam_absent;
        if (fw.pupil_failed) ++report.diagnostics.pupil_failed;
        if (fw.reflex_failed) ++report.diagnostics.reflex_failed;
        if (fw.det.working_distance_m) wd_estimates.push_back(*fw.det.working_distance_m);
        detections.push_back(fw.det);
    }

    double wd = manifest.setup.d_m;
    report.diagnostics.wd_source = "manifest";
    if (!wd_estimates.empty()) {
        const double est = robust::median(std::move(wd_estimates));
        if (est >= cfg.wd_min_m && est <= cfg.wd_max_m) {
            wd = est;
            report.diagnostics.wd_source = "fiducials";
        }
    }
    report.working_distance_m = wd;
    optics::OpticalSetup setup_eff = manifest.setup;
    setup_eff.d_m = wd;

    const auto pupil = session_pupil(detections);
    std::vector<PassSegment> segments;
    try {
        segments = segment_passes(detections, cfg);
    } catch (const Error& e) {
        report.error = err_name(Err::TooFewValidPasses);
        report.error_message = std::string("pass segmentation failed: ") + e.what();
        if (detections_out) *detections_out = std::move(detections);
        return report;
    }

    std::vector<double> pass_powers, pass_ratios;
    for (const auto& seg : segments) {
        PassResult pr;
        pr.segment = seg;
        try {
            if (!pupil) raise(Err::PupilNotFound, "no pupil in any frame");
            pr.stamps = select_timestamps(seg, detections, *pupil, cfg);
            const auto ratio = measure_ratio(seg, pr.stamps, detections, cfg);
            pr.ratio = ratio.r;
            pr.power_d = optics::estimate_power(ratio, setup_eff).value_d;
            pr.valid = true;
            pass_powers.push_back(pr.power_d);
            pass_ratios.push_back(pr.ratio);
        } catch (const Error& e) {
            pr.failure = err_name(e.code());
        }
        report.passes.push_back(pr);
    }

    if (pass_powers.size() < 2) {
        report.error = err_name(Err::TooFewValidPasses);
        report.error_message = "fewer than 2 valid passes";
    } else {
        report.net_power_d = robust::median(pass_powers);
        const double med_ratio = robust::median(pass_ratios);
        if (med_ratio != 0.0)
            report.movement =
                optics::movement_direction(optics::MovementRatio{med_ratio}, cfg.neutral_threshold);
        report.screening = optics::classify(optics::NetPower{*report.net_power_d, 0.0});
    }

    if (detections_out) *detections_out = std::move(detections);
    return report;
}

AnalysisReport analyze_session(const std::string& session_dir, const PipelineConfig& cfg,
                               std::vector<FrameDetections>* detections_out) {
    const auto manifest =
        io::read_manifest((std::filesystem::path(session_dir) / "manifest.json").string());
    const auto paths = io::list_frame_paths(session_dir);
    return analyze_video(paths, manifest, cfg, detections_out);
}

}  // namespace retino::pipeline
