#include <cmath>
#include <numeric>

#include "retino/imgproc.hpp"

namespace retino::img {

ImageGray median_filter(const ImageGray& src, int k) {
    if (k <= 0 || k % 2 == 0) raise(Err::BadKernel, "median kernel must be odd and positive");
    if (k > std::min(src.width, src.height))
        raise(Err::BadKernel, "median kernel larger than image");
    const int h = k / 2;
    const int target = (k * k) / 2 + 1;  // rank of the median in the window
    ImageGray out(src.width, src.height);

    // Huang's sliding histogram, one row of output at a time.
    std::array<int, 256> hist{};
    for (int y = 0; y < src.height; ++y) {
        hist.fill(0);
        for (int dy = -h; dy <= h; ++dy)
            for (int dx = -h; dx <= h; ++dx) ++hist[src.at_c(dx, y + dy)];
        for (int x = 0; x < src.width; ++x) {
            if (x > 0) {
                for (int dy = -h; dy <= h; ++dy) {
                    --hist[src.at_c(x - 1 - h, y + dy)];
                    ++hist[src.at_c(x + h, y + dy)];
                }
            }
            int cum = 0;
            for (int v = 0; v < 256; ++v) {
                cum += hist[v];
                if (cum >= target) {
                    out.at(x, y) = static_cast<std::uint8_t>(v);
                    break;
                }
            }
        }
    }
    return out;
}

ImageGray clahe(const ImageGray& src, const ClaheParams& params) {
    const int tile = std::max(2, params.tile_px);
    const int tiles_x = (src.width + tile - 1) / tile;
    const int tiles_y = (src.height + tile - 1) / tile;

    // Per-tile equalization LUTs with clipped histograms.
    std::vector<std::array<std::uint8_t, 256>> luts(
        static_cast<std::size_t>(tiles_x) * tiles_y);
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            const int x0 = tx * tile;
            const int y0 = ty * tile;
            const int x1 = std::min(x0 + tile, src.width);
            const int y1 = std::min(y0 + tile, src.height);
            const int area = (x1 - x0) * (y1 - y0);

            std::array<std::uint32_t, 256> hist{};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) ++hist[src.at(x, y)];

            if (params.clip_limit > 0.0 && std::isfinite(params.clip_limit)) {
                const std::uint32_t clip = std::max<std::uint32_t>(
                    1, static_cast<std::uint32_t>(params.clip_limit * area / 256.0));
                std::uint32_t excess = 0;
                for (auto& b : hist)
                    if (b > clip) {
                        excess += b - clip;
                        b = clip;
                    }
                const std::uint32_t add = excess / 256;
                std::uint32_t rem = excess % 256;
                for (int v = 0; v < 256; ++v) {
                    hist[v] += add;
                    if (rem > 0) {
                        ++hist[v];
                        --rem;
                    }
                }
            }

            auto& lut = luts[static_cast<std::size_t>(ty) * tiles_x + tx];
            std::uint64_t cum = 0;
            for (int v = 0; v < 256; ++v) {
                cum += hist[v];
                lut[v] = static_cast<std::uint8_t>(
                    std::lround(255.0 * static_cast<double>(cum) / area));
            }
        }
    }

    // Bilinear blend between the four nearest tile mappings.
    ImageGray out(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        const double fy = (y - tile / 2.0) / tile;
        int ty0 = static_cast<int>(std::floor(fy));
        double wy = fy - ty0;
        if (ty0 < 0) {
            ty0 = 0;
            wy = 0.0;
        }
        int ty1 = std::min(ty0 + 1, tiles_y - 1);
        if (ty0 > tiles_y - 1) {
            ty0 = ty1 = tiles_y - 1;
            wy = 0.0;
        }
        for (int x = 0; x < src.width; ++x) {
            const double fx = (x - tile / 2.0) / tile;
            int tx0 = static_cast<int>(std::floor(fx));
            double wx = fx - tx0;
            if (tx0 < 0) {
                tx0 = 0;
                wx = 0.0;
            }
            int tx1 = std::min(tx0 + 1, tiles_x - 1);
            if (tx0 > tiles_x - 1) {
                tx0 = tx1 = tiles_x - 1;
                wx = 0.0;
            }
            const std::uint8_t v = src.at(x, y);
            const double v00 = luts[static_cast<std::size_t>(ty0) * tiles_x + tx0][v];
            const double v01 = luts[static_cast<std::size_t>(ty0) * tiles_x + tx1][v];
            const double v10 = luts[static_cast<std::size_t>(ty1) * tiles_x + tx0][v];
            const double v11 = luts[static_cast<std::size_t>(ty1) * tiles_x + tx1][v];
            const double top = v00 * (1.0 - wx) + v01 * wx;
            const double bot = v10 * (1.0 - wx) + v11 * wx;
            out.at(x, y) = static_cast<std::uint8_t>(std::lround(top * (1.0 - wy) + bot * wy));
        }
    }
    return out;
}

namespace {

ImageGray bilateral_filter(const ImageGray& src, const BilateralParams& p) {
    if (!(p.sigma_spatial > 0.0) || !(p.sigma_range > 0.0))
        raise(Err::ConfigInvalid, "bilateral sigmas must be positive");
    const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * p.sigma_spatial)));
    std::vector<double> spatial((2 * radius + 1) * (2 * radius + 1));
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            spatial[(dy + radius) * (2 * radius + 1) + dx + radius] =
                std::exp(-(dx * dx + dy * dy) / (2.0 * p.sigma_spatial * p.sigma_spatial));
    std::array<double, 256> range{};
    for (int d = 0; d < 256; ++d)
        range[d] = std::exp(-(d * d) / (2.0 * p.sigma_range * p.sigma_range));

    ImageGray out(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            const int center = src.at(x, y);
            double num = 0.0, den = 0.0;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int v = src.at_c(x + dx, y + dy);
                    const double w = spatial[(dy + radius) * (2 * radius + 1) + dx + radius] *
                                     range[std::abs(v - center)];
                    num += w * v;
                    den += w;
                }
            }
            out.at(x, y) = static_cast<std::uint8_t>(std::lround(num / den));
        }
    }
    return out;
}

ImageGray nlm_filter(const ImageGray& src, const NlmParams& p) {
    if (p.patch_radius < 1 || p.search_radius < 1 || !(p.strength > 0.0))
        raise(Err::ConfigInvalid, "invalid non-local means parameters");
    const int pr = p.patch_radius;
    const int sr = p.search_radius;
    const double inv_h2 = 1.0 / (p.strength * p.strength);
    const int patch_n = (2 * pr + 1) * (2 * pr + 1);

    ImageGray out(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            double num = 0.0, den = 0.0;
            double wmax = 0.0;
            for (int sy = -sr; sy <= sr; ++sy) {
                for (int sx = -sr; sx <= sr; ++sx) {
                    if (sx == 0 && sy == 0) continue;
                    double d2 = 0.0;
                    for (int py = -pr; py <= pr; ++py) {
                        for (int px = -pr; px <= pr; ++px) {
                            const double diff = static_cast<double>(src.at_c(x + px, y + py)) -
                                                src.at_c(x + sx + px, y + sy + py);
                            d2 += diff * diff;
                        }
                    }
                    d2 /= patch_n;
                    const double w = std::exp(-d2 * inv_h2);
                    wmax = std::max(wmax, w);
                    num += w * src.at_c(x + sx, y + sy);
                    den += w;
                }
            }
            // Center pixel weighted like its best neighbor.
            const double wc = wmax > 0.0 ? wmax : 1.0;
            num += wc * src.at(x, y);
            den += wc;
            out.at(x, y) = static_cast<std::uint8_t>(std::lround(num / den));
        }
    }
    return out;
}

}  // namespace

ImageGray denoise_edge_preserving(const ImageGray& src, DenoiseMode mode,
                                  const BilateralParams& bp, const NlmParams& np) {
    switch (mode) {
        case DenoiseMode::Bilateral: return bilateral_filter(src, bp);
        case DenoiseMode::NonLocalMeans: return nlm_filter(src, np);
    }
    raise(Err::ConfigInvalid, "unknown denoise mode");
}

namespace {

inline double cubic_weight(double t) {
    // Catmull-Rom (a = -0.5).
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

}  // namespace

ImageGray BicubicUpsampler::apply(const ImageGray& src, int factor) const {
    if (factor != 2 && factor != 4) raise(Err::ConfigInvalid, "upsample factor must be 2 or 4");
    const int ow = src.width * factor;
    const int oh = src.height * factor;

    // Horizontal pass into float, then vertical.
    std::vector<float> horiz(static_cast<std::size_t>(ow) * src.height);
    for (int ox = 0; ox < ow; ++ox) {
        const double sx = (ox + 0.5) / factor - 0.5;
        const int x0 = static_cast<int>(std::floor(sx));
        const double f = sx - x0;
        double w[4];
        for (int i = 0; i < 4; ++i) w[i] = cubic_weight(f - (i - 1));
        for (int y = 0; y < src.height; ++y) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) acc += w[i] * src.at_c(x0 + i - 1, y);
            horiz[static_cast<std::size_t>(y) * ow + ox] = static_cast<float>(acc);
        }
    }
    ImageGray out(ow, oh);
    for (int oy = 0; oy < oh; ++oy) {
        const double sy = (oy + 0.5) / factor - 0.5;
        const int y0 = static_cast<int>(std::floor(sy));
        const double f = sy - y0;
        double w[4];
        for (int i = 0; i < 4; ++i) w[i] = cubic_weight(f - (i - 1));
        for (int ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) {
                const int yy = std::clamp(y0 + i - 1, 0, src.height - 1);
                acc += w[i] * horiz[static_cast<std::size_t>(yy) * ow + ox];
            }
            out.at(ox, oy) =
                static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
        }
    }
    return out;
}

ImageGray upsample(const ImageGray& src, int factor) {
    return BicubicUpsampler{}.apply(src, factor);
}

}  // namespace retino::img
