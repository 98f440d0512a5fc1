#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <limits>

#include "retino/pipeline.hpp"

namespace retino::pipeline {

namespace {

struct QuadCandidate {
    img::Point2 center{};  // window-local pixels (centroid of the dark blob)
    double area = 0.0;
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

/// Dark, roughly square blobs: thresholded connected components filtered by
/// area band, aspect, fill and median-area consistency. Blobs touching the
/// window border are background.
std::vector<QuadCandidate> find_quad_candidates(const img::ImageGray& equalized) {
    std::vector<QuadCandidate> out;
    int threshold;
    try {
        threshold = img::otsu_threshold(equalized);
    } catch (const Error&) {
        return out;  // single-level window
    }
    const int w = equalized.width, h = equalized.height;
    const double max_area = 0.02 * w * h;

    std::vector<std::int32_t> label(static_cast<std::size_t>(w) * h, -1);
    std::vector<std::pair<int, int>> stack;
    std::int32_t next_label = 0;
    for (int sy = 0; sy < h; ++sy) {
        for (int sx = 0; sx < w; ++sx) {
            const std::size_t si = static_cast<std::size_t>(sy) * w + sx;
            if (label[si] >= 0 || equalized.data[si] > threshold) continue;
            QuadCandidate cand;
            cand.min_x = cand.max_x = sx;
            cand.min_y = cand.max_y = sy;
            double sum_x = 0.0, sum_y = 0.0;
            bool touches_border = false;
            stack.clear();
            stack.emplace_back(sx, sy);
            label[si] = next_label;
            while (!stack.empty()) {
                const auto [x, y] = stack.back();
                stack.pop_back();
                cand.area += 1.0;
                sum_x += x;
                sum_y += y;
                cand.min_x = std::min(cand.min_x, x);
                cand.max_x = std::max(cand.max_x, x);
                cand.min_y = std::min(cand.min_y, y);
                cand.max_y = std::max(cand.max_y, y);
                if (x == 0 || y == 0 || x == w - 1 || y == h - 1) touches_border = true;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                        if (label[ni] >= 0 || equalized.data[ni] > threshold) continue;
                        label[ni] = next_label;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
            ++next_label;
            if (touches_border || cand.area < 9.0 || cand.area > max_area) continue;
            const double bw = cand.max_x - cand.min_x + 1;
            const double bh = cand.max_y - cand.min_y + 1;
            const double aspect = bw / bh;
            if (aspect < 0.45 || aspect > 2.2) continue;
            if (cand.area / (bw * bh) < 0.55) continue;
            cand.center = {sum_x / cand.area, sum_y / cand.area};
            out.push_back(cand);
        }
    }

    if (out.size() > 1) {
        std::vector<double> areas;
        areas.reserve(out.size());
        for (const auto& c : out) areas.push_back(c.area);
        const double med = robust::median(areas);
        std::vector<QuadCandidate> kept;
        for (const auto& c : out)
            if (c.area >= 0.4 * med && c.area <= 2.5 * med) kept.push_back(c);
        out = std::move(kept);
    }
    return out;
}

struct PatternFit {
    std::array<int, 5> assignment{-1, -1, -1, -1, -1};  // fiducial index -> candidate index
    int matched = 0;
    double residual2 = std::numeric_limits<double>::infinity();
    std::complex<double> scale{};   // plane meters -> window pixels
    std::complex<double> offset{};
};

/// Fit the unique fiducial pattern to the candidate set by trying every
/// ordered candidate pair against every ordered spec pair as a similarity
/// anchor (the pattern uniqueness makes the best fit unambiguous).
PatternFit fit_pattern(const std::vector<QuadCandidate>& candidates, const PaperFrameSpec& spec,
                       int window_w, int window_h) {
    PatternFit best;
    const int n = static_cast<int>(candidates.size());
    if (n < 2) return best;

    std::array<std::complex<double>, 5> f{};
    for (int k = 0; k < 5; ++k)
        f[static_cast<std::size_t>(k)] = {spec.fiducial_centers_m[static_cast<std::size_t>(k)].x,
                                          spec.fiducial_centers_m[static_cast<std::size_t>(k)].y};
    std::vector<std::complex<double>> c(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        c[static_cast<std::size_t>(i)] = {candidates[static_cast<std::size_t>(i)].center.x,
                                          candidates[static_cast<std::size_t>(i)].center.y};

    double extent = 0.0;
    for (int p = 0; p < 5; ++p)
        for (int q = p + 1; q < 5; ++q)
            extent = std::max(extent, std::abs(f[static_cast<std::size_t>(q)] -
                                               f[static_cast<std::size_t>(p)]));
    const double scale_min = 0.2 * std::min(window_w, window_h) / extent;
    const double scale_max = 1.6 * std::max(window_w, window_h) / extent;
    const double tol_m = 0.0028;  // absorbs perspective anisotropy at <= 15 degrees

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            for (int p = 0; p < 5; ++p) {
                for (int q = 0; q < 5; ++q) {
                    if (p == q) continue;
                    const std::complex<double> dz_plane =
                        f[static_cast<std::size_t>(q)] - f[static_cast<std::size_t>(p)];
                    const std::complex<double> s =
                        (c[static_cast<std::size_t>(j)] - c[static_cast<std::size_t>(i)]) / dz_plane;
                    const double mag = std::abs(s);
                    if (mag < scale_min || mag > scale_max) continue;
                    if (std::abs(std::arg(s)) > 0.52) continue;  // |roll| <= ~30 deg
                    const std::complex<double> t =
                        c[static_cast<std::size_t>(i)] - s * f[static_cast<std::size_t>(p)];

                    PatternFit fit;
                    fit.scale = s;
                    fit.offset = t;
                    fit.residual2 = 0.0;
                    std::vector<bool> used(static_cast<std::size_t>(n), false);
                    const double tol_px = std::max(2.5, tol_m * mag);
                    for (int k = 0; k < 5; ++k) {
                        const std::complex<double> pred = s * f[static_cast<std::size_t>(k)] + t;
                        int nearest = -1;
                        double best_d = tol_px;
                        for (int m = 0; m < n; ++m) {
                            if (used[static_cast<std::size_t>(m)]) continue;
                            const double d = std::abs(c[static_cast<std::size_t>(m)] - pred);
                            if (d < best_d) {
                                best_d = d;
                                nearest = m;
                            }
                        }
                        if (nearest >= 0) {
                            used[static_cast<std::size_t>(nearest)] = true;
                            fit.assignment[static_cast<std::size_t>(k)] = nearest;
                            ++fit.matched;
                            fit.residual2 += best_d * best_d;
                        }
                    }
                    if (fit.matched > best.matched ||
                        (fit.matched == best.matched && fit.residual2 < best.residual2)) {
                        best = fit;
                    }
                }
            }
        }
    }
    return best;
}

/// Sub-pixel center and vertical side length from intensity weights on the
/// negative of the (median-filtered) gray image.
bool refine_center(const img::ImageGray& gray, const QuadCandidate& cand, img::Point2* center,
                   double* side_px) {
    const double side_est = std::sqrt(std::max(1.0, cand.area));
    const int half = static_cast<int>(std::ceil(0.75 * side_est)) + 3;
    const int cx = static_cast<int>(std::lround(cand.center.x));
    const int cy = static_cast<int>(std::lround(cand.center.y));
    const int x0 = std::max(0, cx - half), x1 = std::min(gray.width - 1, cx + half);
    const int y0 = std::max(0, cy - half), y1 = std::min(gray.height - 1, cy + half);
    if (x1 - x0 < 2 || y1 - y0 < 2) return false;

    // Background level = bright percentile of the window (paper).
    std::vector<std::uint8_t> vals;
    vals.reserve(static_cast<std::size_t>((x1 - x0 + 1) * (y1 - y0 + 1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) vals.push_back(gray.at(x, y));
    const std::size_t q = vals.size() * 4 / 5;
    std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(q), vals.end());
    const double bg = vals[q];

    double sw = 0.0, sx = 0.0, sy = 0.0;
    std::vector<double> row_mass(static_cast<std::size_t>(y1 - y0 + 1), 0.0);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double wgt = std::max(0.0, bg - gray.at(x, y));
            sw += wgt;
            sx += wgt * x;
            sy += wgt * y;
            row_mass[static_cast<std::size_t>(y - y0)] += wgt;
        }
    }
    if (sw < 1.0) return false;
    center->x = sx / sw;
    center->y = sy / sw;

    // Vertical side = profile area / plateau height; immune to the horizontal
    // foreshortening a yawed camera introduces.
    std::vector<double> positive;
    double total = 0.0;
    for (double m : row_mass)
        if (m > 0.0) {
            positive.push_back(m);
            total += m;
        }
    if (positive.size() < 2) return false;
    std::sort(positive.begin(), positive.end());
    const double plateau = positive[positive.size() * 9 / 10];
    if (plateau <= 0.0) return false;
    *side_px = total / plateau;
    return true;
}

Roi scan_window(const img::ImageGray& gray, int wx0, int wy0, int ww, int wh,
                const PipelineConfig& cfg, bool* found) {
    const img::ImageGray window = gray.crop(wx0, wy0, ww, wh);
    const PreprocessedRoi pre = preprocess_roi(window, cfg);
    const auto candidates = find_quad_candidates(pre.equalized);
    *found = !candidates.empty();
    if (!*found) return Roi{};

    int min_x = ww, min_y = wh, max_x = 0, max_y = 0;
    for (const auto& c : candidates) {
        min_x = std::min(min_x, c.min_x);
        min_y = std::min(min_y, c.min_y);
        max_x = std::max(max_x, c.max_x);
        max_y = std::max(max_y, c.max_y);
    }
    const int bw = max_x - min_x + 1;
    const int bh = max_y - min_y + 1;
    const int mx = static_cast<int>(std::lround(0.10 * bw));
    const int my = static_cast<int>(std::lround(0.10 * bh));
    Roi roi;
    roi.x = std::max(0, wx0 + min_x - mx);
    roi.y = std::max(0, wy0 + min_y - my);
    roi.w = std::min(gray.width - roi.x, bw + 2 * mx);
    roi.h = std::min(gray.height - roi.y, bh + 2 * my);
    return roi;
}

}  // namespace

PreprocessedRoi preprocess_roi(const img::ImageGray& roi_gray, const PipelineConfig& cfg) {
    PreprocessedRoi pre;
    const int k = std::min(cfg.median_kernel, std::min(roi_gray.width, roi_gray.height) | 1);
    pre.gray = median_filter(roi_gray, std::max(1, k % 2 == 0 ? k - 1 : k));
    pre.equalized = img::clahe(pre.gray, cfg.clahe);
    return pre;
}

Roi detect_roi_gray(const img::ImageGray& gray, const std::optional<Roi>& prev,
                    const PipelineConfig& cfg) {
    if (prev) {
        // Search restricted to the previous box expanded by 25%.
        const int ex = static_cast<int>(std::lround(prev->w * 0.125));
        const int ey = static_cast<int>(std::lround(prev->h * 0.125));
        const int x0 = std::max(0, prev->x - ex);
        const int y0 = std::max(0, prev->y - ey);
        const int x1 = std::min(gray.width, prev->x + prev->w + ex);
        const int y1 = std::min(gray.height, prev->y + prev->h + ey);
        if (x1 - x0 > 8 && y1 - y0 > 8) {
            bool found = false;
            const Roi roi = scan_window(gray, x0, y0, x1 - x0, y1 - y0, cfg, &found);
            if (found) return roi;
        }
    }
    bool found = false;
    const Roi roi = scan_window(gray, 0, 0, gray.width, gray.height, cfg, &found);
    if (!found) raise(Err::FrameNotFound, "no fiducial-like quads in the frame");
    return roi;
}

Roi detect_roi(const img::ImageRGB& frame, const std::optional<Roi>& prev,
               const PipelineConfig& cfg) {
    return detect_roi_gray(img::to_gray_ccir601(frame), prev, cfg);
}

void interpolate_fiducials(FiducialFrame& frame, const FiducialHistory& history,
                           const PipelineConfig& cfg) {
    (void)cfg;
    for (int k = 0; k < 5; ++k) {
        auto& obs = frame.fiducials[static_cast<std::size_t>(k)];
        if (obs.detected) continue;
        // Most recent frame that saw this fiducial, motion-compensated by the
        // fiducials both frames share.
        for (auto it = history.rbegin(); it != history.rend(); ++it) {
            const auto& past = it->fiducials[static_cast<std::size_t>(k)];
            if (!past.present) continue;
            std::vector<double> dx, dy;
            for (int m = 0; m < 5; ++m) {
                const auto& now_m = frame.fiducials[static_cast<std::size_t>(m)];
                const auto& past_m = it->fiducials[static_cast<std::size_t>(m)];
                if (now_m.detected && past_m.present) {
                    dx.push_back(now_m.center_px.x - past_m.center_px.x);
                    dy.push_back(now_m.center_px.y - past_m.center_px.y);
                }
            }
            img::Point2 pos = past.center_px;
            if (!dx.empty()) {
                pos.x += robust::median(dx);
                pos.y += robust::median(dy);
            }
            obs.center_px = pos;
            obs.side_px = past.side_px;
            obs.detected = false;
            obs.present = true;
            break;
        }
    }
}

FiducialFrame detect_fiducials(const PreprocessedRoi& pre, const PaperFrameSpec& spec,
                               const FiducialHistory& history, const Roi& roi,
                               const PipelineConfig& cfg) {
    FiducialFrame frame;
    frame.roi = roi;

    const auto candidates = find_quad_candidates(pre.equalized);
    const PatternFit fit = fit_pattern(candidates, spec, pre.equalized.width,
                                       pre.equalized.height);

    if (fit.matched >= 2) {
        for (int k = 0; k < 5; ++k) {
            const int ci = fit.assignment[static_cast<std::size_t>(k)];
            if (ci < 0) continue;
            auto& obs = frame.fiducials[static_cast<std::size_t>(k)];
            img::Point2 center = candidates[static_cast<std::size_t>(ci)].center;
            double side = std::sqrt(candidates[static_cast<std::size_t>(ci)].area);
            refine_center(pre.gray, candidates[static_cast<std::size_t>(ci)], &center, &side);
            obs.center_px = {center.x + roi.x, center.y + roi.y};
            obs.side_px = side;
            obs.detected = true;
            obs.present = true;
            ++frame.n_detected;
        }
    } else {
        // Too few detections this frame; only history can rescue it.
        bool usable_history = false;
        for (auto it = history.rbegin(); it != history.rend(); ++it)
            if (it->n_present() >= 2) {
                usable_history = true;
                break;
            }
        if (!usable_history)
            raise(Err::PatternNotFound, "fewer than 2 fiducials and no usable history");
    }

    interpolate_fiducials(frame, history, cfg);

    // Transform prediction as a last resort for slots history could not fill.
    if (fit.matched >= 2) {
        for (int k = 0; k < 5; ++k) {
            auto& obs = frame.fiducials[static_cast<std::size_t>(k)];
            if (obs.present) continue;
            const std::complex<double> pred =
                fit.scale * std::complex<double>{spec.fiducial_centers_m[static_cast<std::size_t>(k)].x,
                                                 spec.fiducial_centers_m[static_cast<std::size_t>(k)].y} +
                fit.offset;
            obs.center_px = {pred.real() + roi.x, pred.imag() + roi.y};
            obs.side_px = std::abs(fit.scale) * spec.fiducial_side_m;
            obs.detected = false;
            obs.present = true;
        }
    }

    if (frame.n_present() < 2)
        raise(Err::PatternNotFound, "pattern could not be completed");
    return frame;
}

namespace {

img::Homography compose(const img::Homography& second, const img::Homography& first) {
    // Result applies `first`, then `second` (matrix product second * first).
    img::Homography out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k)
                acc += second.m[static_cast<std::size_t>(r) * 3 + k] *
                       first.m[static_cast<std::size_t>(k) * 3 + c];
            out.m[static_cast<std::size_t>(r) * 3 + c] = acc;
        }
    }
    if (std::abs(out.m[8]) > 1e-15) {
        const double s = out.m[8];
        for (auto& v : out.m) v /= s;
    }
    return out;
}

}  // namespace

RectifiedFrame correct_perspective(const img::ImageGray& roi_gray, const img::ImageGray& roi_red,
                                   const FiducialFrame& fids, const PaperFrameSpec& spec,
                                   const PipelineConfig& cfg) {
    // Detected centers first; interpolated ones only to reach four points.
    std::vector<img::Point2> src, dst;
    for (int pass = 0; pass < 2; ++pass) {
        for (int k = 0; k < 5; ++k) {
            const auto& obs = fids.fiducials[static_cast<std::size_t>(k)];
            if (!obs.present) continue;
            if ((pass == 0) != obs.detected) continue;
            if (pass == 1 && src.size() >= 4) continue;
            src.push_back({obs.center_px.x - fids.roi.x, obs.center_px.y - fids.roi.y});
            dst.push_back(spec.fiducial_centers_m[static_cast<std::size_t>(k)]);
        }
    }

    RectifiedFrame rect;
    rect.geom.roi_to_plane = img::estimate_homography(src, dst);
    rect.geom.ppm = cfg.pixels_per_meter;
    rect.geom.window_m = spec.panel_extent_m;
    rect.geom.width_px =
        static_cast<int>(std::lround(rect.geom.window_m.width() * rect.geom.ppm));
    rect.geom.height_px =
        static_cast<int>(std::lround(rect.geom.window_m.height() * rect.geom.ppm));

    img::Homography plane_to_rect_h;
    plane_to_rect_h.m = {rect.geom.ppm, 0.0, -rect.geom.window_m.x0 * rect.geom.ppm,
                         0.0, rect.geom.ppm, -rect.geom.window_m.y0 * rect.geom.ppm,
                         0.0, 0.0, 1.0};
    const img::Homography roi_to_rect = compose(plane_to_rect_h, rect.geom.roi_to_plane);

    rect.gray = img::warp_perspective(roi_gray, roi_to_rect, rect.geom.width_px,
                                      rect.geom.height_px);
    rect.red = img::warp_perspective(roi_red, roi_to_rect, rect.geom.width_px,
                                     rect.geom.height_px);
    return rect;
}

std::optional<double> estimate_working_distance(const FiducialFrame& fids,
                                                const PaperFrameSpec& spec,
                                                const optics::OpticalSetup& setup) {
    std::vector<double> estimates;
    for (const auto& obs : fids.fiducials) {
        if (!obs.detected || obs.side_px <= 0.0) continue;
        estimates.push_back(setup.focal_length_px * spec.fiducial_side_m / obs.side_px);
    }
    if (estimates.empty()) return std::nullopt;
    return robust::median(std::move(estimates));
}

}  // namespace retino::pipeline
