#include <algorithm>
#include <cmath>

#include "retino/imgproc.hpp"

namespace retino::img {

namespace {
constexpr int kAngleSteps = 64;
}

std::vector<CircleHit> hough_circles(const EdgeMap& edges, int r_min, int r_max,
                                     int max_results) {
    if (r_min < 3) raise(Err::ConfigInvalid, "hough_circles needs r_min >= 3");
    if (r_max < r_min) raise(Err::ConfigInvalid, "hough_circles needs r_max >= r_min");
    const int w = edges.width, h = edges.height;
    const int nr = r_max - r_min + 1;
    if (w < 1 || h < 1) return {};

    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (edges.at(x, y)) pts.emplace_back(x, y);
    if (pts.empty()) return {};

    double cosv[kAngleSteps], sinv[kAngleSteps];
    for (int a = 0; a < kAngleSteps; ++a) {
        const double th = 2.0 * 3.14159265358979323846 * a / kAngleSteps;
        cosv[a] = std::cos(th);
        sinv[a] = std::sin(th);
    }

    std::vector<std::int32_t> acc(static_cast<std::size_t>(nr) * w * h, 0);
    auto acc_at = [&](int r, int x, int y) -> std::int32_t& {
        return acc[(static_cast<std::size_t>(r) * h + y) * w + x];
    };
    for (const auto& [px, py] : pts) {
        for (int ri = 0; ri < nr; ++ri) {
            const double r = r_min + ri;
            for (int a = 0; a < kAngleSteps; ++a) {
                const int cx = static_cast<int>(std::lround(px - r * cosv[a]));
                const int cy = static_cast<int>(std::lround(py - r * sinv[a]));
                if (cx < 0 || cy < 0 || cx >= w || cy >= h) continue;
                ++acc_at(ri, cx, cy);
            }
        }
    }

    std::int32_t peak = 0;
    for (auto v : acc) peak = std::max(peak, v);
    if (peak <= 0) return {};
    const std::int32_t floor_votes = std::max<std::int32_t>(6, peak / 5);

    // Local maxima over the 3x3x3 neighborhood.
    std::vector<CircleHit> hits;
    for (int ri = 0; ri < nr; ++ri) {
        for (int y = 1; y + 1 < h; ++y) {
            for (int x = 1; x + 1 < w; ++x) {
                const std::int32_t v = acc_at(ri, x, y);
                if (v < floor_votes) continue;
                bool is_max = true;
                for (int dr = -1; dr <= 1 && is_max; ++dr) {
                    if (ri + dr < 0 || ri + dr >= nr) continue;
                    for (int dy = -1; dy <= 1 && is_max; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (dr == 0 && dx == 0 && dy == 0) continue;
                            const std::int32_t nvote = acc_at(ri + dr, x + dx, y + dy);
                            // Strict inequality against earlier cells breaks plateaus
                            // deterministically.
                            if (nvote > v ||
                                (nvote == v && (dr < 0 || (dr == 0 && (dy < 0 || (dy == 0 && dx < 0)))))) {
                                is_max = false;
                                break;
                            }
                        }
                    }
                }
                if (!is_max) continue;

                CircleHit hit;
                hit.votes = v;
                hit.radius = r_min + ri;
                // Parabolic sub-pixel refinement of the center.
                const double vl = acc_at(ri, x - 1, y), vr = acc_at(ri, x + 1, y);
                const double vu = acc_at(ri, x, y - 1), vd = acc_at(ri, x, y + 1);
                double dx_ref = 0.0, dy_ref = 0.0;
                const double denx = vl - 2.0 * v + vr;
                if (denx < 0.0) dx_ref = std::clamp(0.5 * (vl - vr) / denx, -0.5, 0.5);
                const double deny = vu - 2.0 * v + vd;
                if (deny < 0.0) dy_ref = std::clamp(0.5 * (vu - vd) / deny, -0.5, 0.5);
                hit.cx = x + dx_ref;
                hit.cy = y + dy_ref;
                hits.push_back(hit);
            }
        }
    }

    std::sort(hits.begin(), hits.end(), [](const CircleHit& a, const CircleHit& b) {
        if (a.votes != b.votes) return a.votes > b.votes;
        if (a.radius != b.radius) return a.radius < b.radius;
        if (a.cy != b.cy) return a.cy < b.cy;
        return a.cx < b.cx;
    });

    // Suppress duplicates of an already accepted circle.
    std::vector<CircleHit> out;
    for (const auto& hit : hits) {
        bool dup = false;
        for (const auto& kept : out) {
            const double dist = std::hypot(hit.cx - kept.cx, hit.cy - kept.cy);
            if (dist < 0.5 * kept.radius && std::abs(hit.radius - kept.radius) <= 0.3 * kept.radius)
                dup = true;
        }
        if (dup) continue;
        out.push_back(hit);
        if (static_cast<int>(out.size()) >= max_results) break;
    }
    return out;
}

}  // namespace retino::img
