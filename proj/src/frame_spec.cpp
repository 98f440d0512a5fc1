#include "retino/frame_spec.hpp"

#include <cmath>
#include <limits>

namespace retino::pipeline {

const char* frame_size_name(FrameSize s) {
    switch (s) {
        case FrameSize::Small: return "small";
        case FrameSize::Medium: return "medium";
        case FrameSize::Large: return "large";
    }
    return "?";
}

FrameSize PaperFrameSpec::parse_size_code(std::string_view code) {
    if (code == "small") return FrameSize::Small;
    if (code == "medium") return FrameSize::Medium;
    if (code == "large") return FrameSize::Large;
    raise(Err::ConfigInvalid, "unknown frame size code: " + std::string(code));
}

PaperFrameSpec PaperFrameSpec::standard(FrameSize size) {
    PaperFrameSpec spec;
    spec.size_code = size;
    switch (size) {
        case FrameSize::Small: spec.reflex_search_w_m = 0.030; break;
        case FrameSize::Medium: spec.reflex_search_w_m = 0.035; break;
        case FrameSize::Large: spec.reflex_search_w_m = 0.040; break;
    }
    spec.reflex_search_h_m = 0.020;
    spec.fiducial_side_m = 0.005;

    const double w = spec.reflex_search_w_m;
    const double h = spec.reflex_search_h_m;
    // Top-left, top-right, left side, right side (lower), bottom (off-center):
    // scattered so every ordered pair displacement is unique.
    spec.fiducial_centers_m = {
        img::Point2{-0.007, -0.0065},
        img::Point2{w + 0.007, -0.0065},
        img::Point2{-0.007, 0.35 * h},
        img::Point2{w + 0.007, 0.675 * h},
        img::Point2{0.30 * w, h + 0.0065},
    };

    const double s = spec.fiducial_side_m;
    spec.beam_search_m = RectM{spec.fiducial_centers_m[0].x + s / 2 + 0.0015,
                               spec.fiducial_centers_m[0].y - s / 2,
                               spec.fiducial_centers_m[1].x - s / 2 - 0.0015,
                               spec.fiducial_centers_m[0].y + s / 2};
    spec.panel_extent_m = RectM{-0.0125, -0.0115, w + 0.0125, h + 0.0115};
    spec.validate();
    return spec;
}

double PaperFrameSpec::min_displacement_separation_m() const {
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 5; ++a) {
        for (int b = 0; b < 5; ++b) {
            if (a == b) continue;
            const double dx1 = fiducial_centers_m[b].x - fiducial_centers_m[a].x;
            const double dy1 = fiducial_centers_m[b].y - fiducial_centers_m[a].y;
            for (int c = 0; c < 5; ++c) {
                for (int d = 0; d < 5; ++d) {
                    if (c == d || (a == c && b == d)) continue;
                    const double dx2 = fiducial_centers_m[d].x - fiducial_centers_m[c].x;
                    const double dy2 = fiducial_centers_m[d].y - fiducial_centers_m[c].y;
                    best = std::min(best, std::hypot(dx1 - dx2, dy1 - dy2));
                }
            }
        }
    }
    return best;
}

void PaperFrameSpec::validate() const {
    if (!(reflex_search_w_m > 0.0) || !(reflex_search_h_m > 0.0) || !(fiducial_side_m > 0.0))
        raise(Err::ConfigInvalid, "frame dimensions must be positive");
    if (!(beam_search_m.width() > 0.0) || !(beam_search_m.height() > 0.0))
        raise(Err::ConfigInvalid, "beam search region must be non-empty");
    if (min_displacement_separation_m() < fiducial_side_m * 0.5)
        raise(Err::ConfigInvalid, "fiducial pattern displacements are not unique enough");
}

}  // namespace retino::pipeline
