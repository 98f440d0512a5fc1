#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "retino/image.hpp"

namespace retino::img {

/// Binary edge mask with the signed horizontal gradient retained at edge
/// pixels (zero elsewhere). The sign tells dark-to-bright (positive, a left
/// edge of a bright stripe) from bright-to-dark transitions.
struct EdgeMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> edge;
    std::vector<float> gx;

    EdgeMap() = default;
    EdgeMap(int w, int h)
        : width(w), height(h),
          edge(static_cast<std::size_t>(w) * h, 0),
          gx(static_cast<std::size_t>(w) * h, 0.0f) {}

    bool at(int x, int y) const { return edge[static_cast<std::size_t>(y) * width + x] != 0; }
    float gx_at(int x, int y) const { return gx[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
};

/// Sobel gradients scaled so a clean step of height h reports magnitude h.
struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<float> gx;
    std::vector<float> gy;
    std::vector<float> mag;
};

GradientField sobel(const ImageGray& src);

// ---- filters -------------------------------------------------------------

/// k x k median filter with clamp-to-border handling; k must be odd.
ImageGray median_filter(const ImageGray& src, int k);

struct ClaheParams {
    int tile_px = 32;
    double clip_limit = 2.0;  ///< multiple of the uniform bin height; <= 0 disables clipping
};

/// Contrast-limited adaptive histogram equalization with bilinear blending
/// between tile mappings. Partial border tiles are allowed.
ImageGray clahe(const ImageGray& src, const ClaheParams& params = {});

struct BilateralParams {
    double sigma_spatial = 2.0;
    double sigma_range = 25.0;
};

struct NlmParams {
    int patch_radius = 1;
    int search_radius = 3;
    double strength = 10.0;
};

enum class DenoiseMode { Bilateral, NonLocalMeans };

ImageGray denoise_edge_preserving(const ImageGray& src, DenoiseMode mode,
                                  const BilateralParams& bp = {}, const NlmParams& np = {});

// ---- thresholding & edges --------------------------------------------------

/// Otsu threshold over a 256-bin histogram: the level maximizing inter-class
/// variance, ties broken by the lowest level. Binarize as value > threshold.
/// Throws Degenerate when the region holds a single distinct level.
int otsu_threshold(const std::uint32_t histogram[256]);
int otsu_threshold(const ImageGray& src, const std::vector<std::uint8_t>* mask = nullptr);

/// Canny with Sobel gradients, non-maximum suppression and hysteresis.
/// Thresholds are in intensity-step units (the normalized gradient scale).
EdgeMap canny(const ImageGray& src, double lo, double hi);

/// Canny with hi from Otsu over the nonzero gradient magnitudes and
/// lo = lo_ratio * hi.
EdgeMap canny_auto(const ImageGray& src, double lo_ratio = 0.4);

// ---- circles ---------------------------------------------------------------

struct CircleHit {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
    int votes = 0;
};

/// Gradient-directed circle Hough transform; returns accumulator local
/// maxima sorted by votes descending. r_min must be >= 3 px.
std::vector<CircleHit> hough_circles(const EdgeMap& edges, int r_min, int r_max,
                                     int max_results = 8);

// ---- resampling -------------------------------------------------------------

/// Pluggable upsampler; output dimensions are factor * input and mean
/// intensity is preserved within 1%.
class Upsampler {
public:
    virtual ~Upsampler() = default;
    virtual ImageGray apply(const ImageGray& src, int factor) const = 0;
};

class BicubicUpsampler final : public Upsampler {
public:
    ImageGray apply(const ImageGray& src, int factor) const override;
};

/// Default (bicubic) upsampling for factor 2 or 4.
ImageGray upsample(const ImageGray& src, int factor);

/// Map an upsampled coordinate back to source coordinates
/// (center-aligned convention).
inline double upsampled_to_source(double x_up, int factor) {
    return (x_up + 0.5) / factor - 0.5;
}

// ---- homography --------------------------------------------------------------

/// 3x3 projective transform, normalized so m[8] == 1.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Point2 apply(Point2 p) const;
    Homography inverse() const;
    double det() const;
    static Homography identity() { return Homography{}; }
};

/// Normalized DLT from >= 4 correspondences (src -> dst), algebraic least
/// squares. Throws DegenerateConfig when the design matrix is rank deficient.
Homography estimate_homography(std::span<const Point2> src, std::span<const Point2> dst);

/// Inverse-mapped warp with bilinear sampling; out-of-bounds samples are 0.
/// H maps source coordinates to destination coordinates.
ImageGray warp_perspective(const ImageGray& src, const Homography& h, int out_w, int out_h);

}  // namespace retino::img
