#include <cmath>
#include <cstring>
#include <deque>

#include "retino/imgproc.hpp"

namespace retino::img {

std::size_t EdgeMap::count() const {
    std::size_t n = 0;
    for (auto e : edge) n += e != 0;
    return n;
}

GradientField sobel(const ImageGray& src) {
    GradientField g;
    g.width = src.width;
    g.height = src.height;
    const std::size_t n = static_cast<std::size_t>(src.width) * src.height;
    g.gx.assign(n, 0.0f);
    g.gy.assign(n, 0.0f);
    g.mag.assign(n, 0.0f);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            const double p00 = src.at_c(x - 1, y - 1), p10 = src.at_c(x, y - 1),
                         p20 = src.at_c(x + 1, y - 1);
            const double p01 = src.at_c(x - 1, y), p21 = src.at_c(x + 1, y);
            const double p02 = src.at_c(x - 1, y + 1), p12 = src.at_c(x, y + 1),
                         p22 = src.at_c(x + 1, y + 1);
            // Scaled so an ideal step of height h reports magnitude h.
            const double gx = ((p20 + 2.0 * p21 + p22) - (p00 + 2.0 * p01 + p02)) / 4.0;
            const double gy = ((p02 + 2.0 * p12 + p22) - (p00 + 2.0 * p10 + p20)) / 4.0;
            const std::size_t i = static_cast<std::size_t>(y) * src.width + x;
            g.gx[i] = static_cast<float>(gx);
            g.gy[i] = static_cast<float>(gy);
            g.mag[i] = static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    }
    return g;
}

int otsu_threshold(const std::uint32_t histogram[256]) {
    std::uint64_t total = 0;
    int levels = 0;
    double total_sum = 0.0;
    for (int v = 0; v < 256; ++v) {
        total += histogram[v];
        if (histogram[v] > 0) ++levels;
        total_sum += static_cast<double>(histogram[v]) * v;
    }
    if (total == 0 || levels < 2)
        raise(Err::Degenerate, "otsu needs at least two distinct levels");

    double best = -1.0;
    int best_t = 0;
    std::uint64_t w0 = 0;
    double sum0 = 0.0;
    for (int t = 0; t < 256; ++t) {
        w0 += histogram[t];
        sum0 += static_cast<double>(histogram[t]) * t;
        if (w0 == 0) continue;
        const std::uint64_t w1 = total - w0;
        if (w1 == 0) break;
        const double mu0 = sum0 / w0;
        const double mu1 = (total_sum - sum0) / w1;
        const double between = static_cast<double>(w0) * static_cast<double>(w1) *
                               (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    return best_t;
}

int otsu_threshold(const ImageGray& src, const std::vector<std::uint8_t>* mask) {
    if (mask && mask->size() != src.size())
        raise(Err::ConfigInvalid, "mask size mismatch");
    std::uint32_t hist[256] = {0};
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (mask && (*mask)[i] == 0) continue;
        ++hist[src.data[i]];
    }
    return otsu_threshold(hist);
}

EdgeMap canny(const ImageGray& src, double lo, double hi) {
    if (lo < 0.0 || hi < lo) raise(Err::ConfigInvalid, "canny needs 0 <= lo <= hi");
    const GradientField g = sobel(src);
    const int w = src.width, h = src.height;

    // Non-maximum suppression along the quantized gradient direction. The
    // asymmetric comparison (>= previous, > next) keeps ideal steps one
    // pixel wide.
    std::vector<std::uint8_t> nms(static_cast<std::size_t>(w) * h, 0);
    auto mag_at = [&](int x, int y) -> float {
        if (x < 0 || y < 0 || x >= w || y >= h) return 0.0f;
        return g.mag[static_cast<std::size_t>(y) * w + x];
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const float m = g.mag[i];
            if (m <= 0.0f) continue;
            const float ax = std::abs(g.gx[i]);
            const float ay = std::abs(g.gy[i]);
            int dx, dy;
            if (ay <= 0.41421356f * ax) {
                dx = 1;
                dy = 0;
            } else if (ax <= 0.41421356f * ay) {
                dx = 0;
                dy = 1;
            } else if ((g.gx[i] > 0) == (g.gy[i] > 0)) {
                dx = 1;
                dy = 1;
            } else {
                dx = 1;
                dy = -1;
            }
            if (m >= mag_at(x - dx, y - dy) && m > mag_at(x + dx, y + dy)) nms[i] = 1;
        }
    }

    // Hysteresis: grow from strong pixels through weak ones (8-connected).
    EdgeMap out(w, h);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (nms[i] && g.mag[i] >= hi) {
                out.edge[i] = 1;
                queue.emplace_back(x, y);
            }
        }
    }
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                if (out.edge[ni] || !nms[ni]) continue;
                if (g.mag[ni] >= lo) {
                    out.edge[ni] = 1;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    }
    for (std::size_t i = 0; i < out.edge.size(); ++i)
        if (out.edge[i]) out.gx[i] = g.gx[i];
    return out;
}

EdgeMap canny_auto(const ImageGray& src, double lo_ratio) {
    const GradientField g = sobel(src);
    std::uint32_t hist[256] = {0};
    bool any = false;
    for (float m : g.mag) {
        const int v = std::clamp(static_cast<int>(std::lround(m)), 0, 255);
        if (v > 0) {
            ++hist[v];
            any = true;
        }
    }
    if (!any) return EdgeMap(src.width, src.height);
    int hi;
    try {
        hi = otsu_threshold(hist);
    } catch (const Error&) {
        // Single gradient level: use it directly.
        hi = 0;
        for (int v = 255; v >= 1; --v)
            if (hist[v] > 0) {
                hi = v;
                break;
            }
    }
    hi = std::max(hi, 1);
    return canny(src, lo_ratio * hi, hi);
}

}  // namespace retino::img
