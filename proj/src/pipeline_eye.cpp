#include <algorithm>
#include <cmath>

#include "retino/pipeline.hpp"

namespace retino::pipeline {

namespace {

struct CropRect {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    bool valid = false;
};

CropRect rect_crop_for(const Rectifier& geom, const RectM& region_m, int img_w, int img_h) {
    const img::Point2 a = geom.plane_to_rect({region_m.x0, region_m.y0});
    const img::Point2 b = geom.plane_to_rect({region_m.x1, region_m.y1});
    CropRect c;
    c.x0 = std::max(0, static_cast<int>(std::floor(a.x)));
    c.y0 = std::max(0, static_cast<int>(std::floor(a.y)));
    const int x1 = std::min(img_w, static_cast<int>(std::ceil(b.x)));
    const int y1 = std::min(img_h, static_cast<int>(std::ceil(b.y)));
    c.w = x1 - c.x0;
    c.h = y1 - c.y0;
    c.valid = c.w >= 4 && c.h >= 2;
    return c;
}

/// Gradient-magnitude weighted sub-pixel x along one row, around column
/// `around` with the given half-window; `positive` selects rising
/// (dark-to-bright) transitions.
std::optional<double> row_edge_centroid(const img::ImageGray& image, int row, double around,
                                        int half_window, bool positive) {
    if (row < 0 || row >= image.height) return std::nullopt;
    const int lo = std::max(1, static_cast<int>(std::lround(around)) - half_window);
    const int hi = std::min(image.width - 2, static_cast<int>(std::lround(around)) + half_window);
    if (hi <= lo) return std::nullopt;
    double sw = 0.0, sx = 0.0;
    for (int x = lo; x <= hi; ++x) {
        const double g = 0.5 * (static_cast<double>(image.at(x + 1, row)) - image.at(x - 1, row));
        const double wgt = positive ? std::max(0.0, g) : std::max(0.0, -g);
        sw += wgt;
        sx += wgt * x;
    }
    if (sw < 2.0) return std::nullopt;
    return sx / sw;
}

}  // namespace

std::optional<BeamMeasure> detect_beam_edges(const RectifiedFrame& rect,
                                             const PaperFrameSpec& spec,
                                             const PipelineConfig& cfg) {
    const CropRect box =
        rect_crop_for(rect.geom, spec.beam_search_m, rect.red.width, rect.red.height);
    if (!box.valid) return std::nullopt;
    const img::ImageGray crop = rect.red.crop(box.x0, box.y0, box.w, box.h);
    const img::ImageGray denoised =
        img::denoise_edge_preserving(crop, img::DenoiseMode::NonLocalMeans, {}, cfg.beam_nlm);

    // Beam-absence test: the Otsu level of a beam-lit band sits between the
    // paper and beam intensities; without the beam it tracks the paper level.
    int otsu;
    try {
        otsu = img::otsu_threshold(denoised);
    } catch (const Error&) {
        return std::nullopt;  // uniform band
    }
    if (otsu < cfg.beam_intensity_floor * 255.0) return std::nullopt;

    // Two Canny runs (Otsu-derived and median-derived thresholds), OR-combined.
    std::vector<std::uint8_t> med_vals(denoised.data.begin(), denoised.data.end());
    std::nth_element(med_vals.begin(), med_vals.begin() + static_cast<std::ptrdiff_t>(med_vals.size() / 2),
                     med_vals.end());
    const double median_level = med_vals[med_vals.size() / 2];
    const img::EdgeMap e1 =
        img::canny(denoised, cfg.canny_lo_ratio * otsu, static_cast<double>(otsu));
    const img::EdgeMap e2 = img::canny(denoised, cfg.canny_lo_ratio * median_level, median_level);

    // Column scores by horizontal gradient sign: positive = left edge.
    std::vector<double> pos_score(static_cast<std::size_t>(box.w), 0.0);
    std::vector<double> neg_score(static_cast<std::size_t>(box.w), 0.0);
    std::vector<int> column_hits(static_cast<std::size_t>(box.w), 0);
    for (int y = 0; y < box.h; ++y) {
        for (int x = 0; x < box.w; ++x) {
            float gx = 0.0f;
            if (e1.at(x, y)) gx = e1.gx_at(x, y);
            else if (e2.at(x, y)) gx = e2.gx_at(x, y);
            else continue;
            ++column_hits[static_cast<std::size_t>(x)];
            if (gx > 0.0f) pos_score[static_cast<std::size_t>(x)] += gx;
            else neg_score[static_cast<std::size_t>(x)] += -gx;
        }
    }

    const int min_hits = std::max(2, static_cast<int>(std::lround(0.3 * box.h)));
    auto pick_column = [&](const std::vector<double>& score) -> int {
        int best = -1;
        double best_score = 0.0;
        for (int x = 0; x < box.w; ++x) {
            if (column_hits[static_cast<std::size_t>(x)] < min_hits) continue;
            if (score[static_cast<std::size_t>(x)] > best_score) {
                best_score = score[static_cast<std::size_t>(x)];
                best = x;
            }
        }
        return best;
    };
    int left_col = pick_column(pos_score);
    int right_col = pick_column(neg_score);
    if (left_col >= 0 && right_col >= 0 && left_col >= right_col) {
        // Contradictory labeling: keep the stronger edge.
        if (pos_score[static_cast<std::size_t>(left_col)] >=
            neg_score[static_cast<std::size_t>(right_col)])
            right_col = -1;
        else
            left_col = -1;
    }
    if (left_col < 0 && right_col < 0) return std::nullopt;

    // Sub-pixel refinement on scan rows spread over the band height.
    BeamMeasure out;
    std::vector<double> lefts, rights;
    const int rows = std::max(1, cfg.scan_lines);
    for (int j = 0; j < rows; ++j) {
        const int y = std::clamp(static_cast<int>(std::lround((j + 0.5) * box.h / rows)), 0,
                                 box.h - 1);
        std::optional<double> l, r;
        if (left_col >= 0) l = row_edge_centroid(denoised, y, left_col, 4, true);
        if (right_col >= 0) r = row_edge_centroid(denoised, y, right_col, 4, false);
        if (l) lefts.push_back(*l + box.x0);
        if (r) rights.push_back(*r + box.x0);
        if (l && r)
            out.center_rows[static_cast<std::size_t>(j)] = 0.5 * (*l + *r) + box.x0;
    }
    if (!lefts.empty()) out.left_px = robust::median(lefts);
    if (!rights.empty()) out.right_px = robust::median(rights);
    if (!out.left_px && !out.right_px) return std::nullopt;
    if (out.left_px && out.right_px && *out.left_px >= *out.right_px) return std::nullopt;
    return out;
}

std::vector<img::CircleHit> pupil_candidates(const RectifiedFrame& rect,
                                             const PaperFrameSpec& spec,
                                             const PipelineConfig& cfg) {
    const RectM search{0.0, 0.0, spec.reflex_search_w_m, spec.reflex_search_h_m};
    const CropRect box = rect_crop_for(rect.geom, search, rect.red.width, rect.red.height);
    if (!box.valid) return {};
    const img::ImageGray crop = rect.red.crop(box.x0, box.y0, box.w, box.h);
    const img::EdgeMap edges = img::canny_auto(crop, cfg.canny_lo_ratio);

    const int r_min = std::max(3, static_cast<int>(std::floor(cfg.pupil_r_min_m * rect.geom.ppm)));
    const int r_max = std::max(
        r_min, static_cast<int>(std::ceil(cfg.pupil_r_max_m * rect.geom.ppm)));
    auto hits = img::hough_circles(edges, r_min, r_max, 6);
    for (auto& hit : hits) {
        hit.cx += box.x0;
        hit.cy += box.y0;
    }
    return hits;
}

PupilVoting::PupilVoting(const Rectifier& geom, const PaperFrameSpec& spec,
                         const PipelineConfig& cfg)
    : bin_px_(cfg.pupil_hist_bin_px), gate_px_(cfg.pupil_gate_px) {
    origin_ = geom.plane_to_rect(spec.fiducial_centers_m[0]);
    bins_x_ = std::max(1, static_cast<int>(std::ceil(geom.width_px / bin_px_)) + 2);
    bins_y_ = std::max(1, static_cast<int>(std::ceil(geom.height_px / bin_px_)) + 2);
    counts_.assign(static_cast<std::size_t>(bins_x_) * bins_y_, 0);
}

void PupilVoting::add(const std::vector<img::CircleHit>& candidates) {
    for (const auto& c : candidates) {
        const int bx = static_cast<int>(std::floor((c.cx - origin_.x) / bin_px_));
        const int by = static_cast<int>(std::floor((c.cy - origin_.y) / bin_px_));
        if (bx < 0 || by < 0 || bx >= bins_x_ || by >= bins_y_) continue;
        ++counts_[static_cast<std::size_t>(by) * bins_x_ + bx];
        all_.push_back(c);
    }
}

void PupilVoting::finalize() {
    if (all_.empty()) raise(Err::PupilNotFound, "no circle candidates in any frame");
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts_.size(); ++i)
        if (counts_[i] > counts_[best]) best = i;
    const int by = static_cast<int>(best) / bins_x_;
    const int bx = static_cast<int>(best) % bins_x_;
    peak_ = {origin_.x + (bx + 0.5) * bin_px_, origin_.y + (by + 0.5) * bin_px_};

    std::vector<double> radii;
    for (const auto& c : all_)
        if (std::hypot(c.cx - peak_.x, c.cy - peak_.y) <= gate_px_) radii.push_back(c.radius);
    if (radii.empty()) raise(Err::PupilNotFound, "no candidates at the histogram peak");
    shared_radius_ = robust::median(std::move(radii));
    finalized_ = true;
}

PupilCircle detect_pupil(const std::vector<img::CircleHit>& candidates, const PupilVoting& voting,
                         double ppm, const PipelineConfig& cfg) {
    if (!voting.finalized()) raise(Err::ConfigInvalid, "pupil voting not finalized");
    if (voting.shared_radius_px() / ppm < cfg.pupil_min_radius_m)
        raise(Err::PupilTooSmall, "pupil radius below the 3 mm floor");

    const img::Point2 peak = voting.peak_center();
    const img::CircleHit* nearest = nullptr;
    double best = cfg.pupil_gate_px;
    for (const auto& c : candidates) {
        const double d = std::hypot(c.cx - peak.x, c.cy - peak.y);
        if (d <= best) {
            best = d;
            nearest = &c;
        }
    }
    if (!nearest) raise(Err::PupilNotFound, "no candidate near the session peak");
    return PupilCircle{nearest->cx, nearest->cy, voting.shared_radius_px()};
}

ReflexMeasure localize_reflex_edges(const RectifiedFrame& rect, const PupilCircle& pupil,
                                    const PipelineConfig& cfg) {
    const int margin = 4;
    const int x0 = std::max(0, static_cast<int>(std::floor(pupil.cx - pupil.radius)) - margin);
    const int y0 = std::max(0, static_cast<int>(std::floor(pupil.cy - pupil.radius)) - margin);
    const int x1 =
        std::min(rect.red.width, static_cast<int>(std::ceil(pupil.cx + pupil.radius)) + margin);
    const int y1 =
        std::min(rect.red.height, static_cast<int>(std::ceil(pupil.cy + pupil.radius)) + margin);
    if (x1 - x0 < 6 || y1 - y0 < 6) raise(Err::ReflexNotFound, "pupil crop too small");

    img::ImageGray crop = rect.red.crop(x0, y0, x1 - x0, y1 - y0);
    const double ccx = pupil.cx - x0;
    const double ccy = pupil.cy - y0;
    for (int y = 0; y < crop.height; ++y)
        for (int x = 0; x < crop.width; ++x)
            if (std::hypot(x - ccx, y - ccy) > pupil.radius) crop.at(x, y) = 0;

    const int factor = cfg.upsample_factor;
    const img::ImageGray up = cfg.upsampler ? cfg.upsampler->apply(crop, factor)
                                            : img::upsample(crop, factor);

    int otsu;
    try {
        otsu = img::otsu_threshold(up);
    } catch (const Error&) {
        raise(Err::ReflexNotFound, "pupil crop is uniform");
    }
    // Guards against an Otsu split of pupil-dark vs mask-zero when no reflex
    // is present at all.
    double sum0 = 0.0, sum1 = 0.0, n0 = 0.0, n1 = 0.0;
    for (auto v : up.data) {
        if (v > otsu) {
            sum1 += v;
            ++n1;
        } else {
            sum0 += v;
            ++n0;
        }
    }
    if (n0 == 0.0 || n1 == 0.0 || (sum1 / n1 - sum0 / n0) < cfg.reflex_min_contrast * 255.0)
        raise(Err::ReflexNotFound, "no reflex-level contrast inside the pupil");

    // Columns with too small a reflex fraction are Purkinje reflections or
    // clutter; keep the longest surviving run.
    std::vector<int> col_count(static_cast<std::size_t>(up.width), 0);
    for (int y = 0; y < up.height; ++y)
        for (int x = 0; x < up.width; ++x)
            if (up.at(x, y) > otsu) ++col_count[static_cast<std::size_t>(x)];
    const int col_floor =
        static_cast<int>(std::lround(cfg.reflex_column_fraction * up.height));
    int best_start = -1, best_len = 0, run_start = -1;
    for (int x = 0; x <= up.width; ++x) {
        const bool on = x < up.width && col_count[static_cast<std::size_t>(x)] >= col_floor;
        if (on && run_start < 0) run_start = x;
        if (!on && run_start >= 0) {
            if (x - run_start > best_len) {
                best_len = x - run_start;
                best_start = run_start;
            }
            run_start = -1;
        }
    }
    if (best_start < 0) raise(Err::ReflexNotFound, "no column passes the reflex fraction test");
    const int run_lo = best_start;
    const int run_hi = best_start + best_len - 1;

    // Gradient-weighted sub-pixel boundaries along scan rows across the
    // central half of the pupil.
    ReflexMeasure out;
    std::vector<double> lefts, rights;
    const int lines = std::max(1, cfg.scan_lines);
    for (int j = 0; j < lines; ++j) {
        // Rows span the central 50% of the pupil: ccy +/- radius/2.
        const double frac = lines == 1 ? 0.0 : -0.5 + static_cast<double>(j) / (lines - 1);
        const double src_y = ccy + frac * pupil.radius;
        const int up_y = static_cast<int>(std::lround((src_y + 0.5) * factor - 0.5));
        const int halfwin = 3 * factor;
        const auto l = row_edge_centroid(up, up_y, run_lo, halfwin, true);
        const auto r = row_edge_centroid(up, up_y, run_hi, halfwin, false);
        if (l) {
            const double v = img::upsampled_to_source(*l, factor) + x0;
            out.left_lines[static_cast<std::size_t>(j)] = v;
            lefts.push_back(v);
        }
        if (r) {
            const double v = img::upsampled_to_source(*r, factor) + x0;
            out.right_lines[static_cast<std::size_t>(j)] = v;
            rights.push_back(v);
        }
    }
    if (lefts.empty() && rights.empty())
        raise(Err::ReflexNotFound, "no scan line crosses the reflex band");
    if (!lefts.empty()) out.left_px = robust::median(lefts);
    if (!rights.empty()) out.right_px = robust::median(rights);
    return out;
}

}  // namespace retino::pipeline
