#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "retino/error.hpp"

namespace retino::img {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// 8-bit single-channel image, row-major.
struct ImageGray {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    ImageGray() = default;
    ImageGray(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
        if (w < 1 || h < 1) raise(Err::ConfigInvalid, "image dimensions must be >= 1");
    }

    bool empty() const { return data.empty(); }
    std::size_t size() const { return data.size(); }

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    /// Clamp-to-border access.
    std::uint8_t at_c(int x, int y) const {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        return at(x, y);
    }

    /// Bilinear sample; integer coordinates hit pixel values exactly.
    /// Samples outside the image return 0.
    double sample(double x, double y) const;

    ImageGray crop(int x0, int y0, int w, int h) const;
};

/// 8-bit interleaved RGB image.
struct ImageRGB {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // 3 * width * height

    ImageRGB() = default;
    ImageRGB(int w, int h)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {
        if (w < 1 || h < 1) raise(Err::ConfigInvalid, "image dimensions must be >= 1");
    }

    std::uint8_t* px(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* px(int x, int y) const {
        return &data[(static_cast<std::size_t>(y) * width + x) * 3];
    }

    ImageRGB crop(int x0, int y0, int w, int h) const;
};

/// CCIR-601 luma: round(0.299 R + 0.587 G + 0.114 B).
ImageGray to_gray_ccir601(const ImageRGB& src);

/// Extract one channel (0 = R, 1 = G, 2 = B).
ImageGray extract_channel(const ImageRGB& src, int channel);

// 8-bit PNG I/O.
void write_png(const std::string& path, const ImageGray& image);
void write_png(const std::string& path, const ImageRGB& image);
ImageRGB read_png_rgb(const std::string& path);
ImageGray read_png_gray(const std::string& path);

}  // namespace retino::img
