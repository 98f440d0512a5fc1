#include "retino/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace retino::img {

double ImageGray::sample(double x, double y) const {
    if (x < 0.0 || y < 0.0 || x > width - 1 || y > height - 1) return 0.0;
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    const double bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

ImageGray ImageGray::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > width || y0 + h > height)
        raise(Err::ConfigInvalid, "crop outside image bounds");
    ImageGray out(w, h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* src = &data[static_cast<std::size_t>(y0 + y) * width + x0];
        std::copy(src, src + w, &out.data[static_cast<std::size_t>(y) * w]);
    }
    return out;
}

ImageRGB ImageRGB::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > width || y0 + h > height)
        raise(Err::ConfigInvalid, "crop outside image bounds");
    ImageRGB out(w, h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* src = &data[(static_cast<std::size_t>(y0 + y) * width + x0) * 3];
        std::copy(src, src + static_cast<std::size_t>(w) * 3,
                  &out.data[static_cast<std::size_t>(y) * w * 3]);
    }
    return out;
}

ImageGray to_gray_ccir601(const ImageRGB& src) {
    ImageGray out(src.width, src.height);
    const std::size_t n = static_cast<std::size_t>(src.width) * src.height;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = &src.data[i * 3];
        const double v = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        out.data[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

ImageGray extract_channel(const ImageRGB& src, int channel) {
    if (channel < 0 || channel > 2) raise(Err::ConfigInvalid, "channel must be 0..2");
    ImageGray out(src.width, src.height);
    const std::size_t n = static_cast<std::size_t>(src.width) * src.height;
    for (std::size_t i = 0; i < n; ++i) out.data[i] = src.data[i * 3 + channel];
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_impl(const std::string& path, int width, int height, int channels,
                    const std::uint8_t* data) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) raise(Err::Io, "cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) raise(Err::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        raise(Err::Io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(Err::Io, "png write error: " + path);
    }
    png_init_io(png, fp.get());
    // Fixed settings so identical images produce identical bytes.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_SUB);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(data + y * stride);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

ImageRGB read_png_impl(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) raise(Err::Io, "cannot open for reading: " + path);

    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) raise(Err::Io, "png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) raise(Err::Io, "png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) raise(Err::Io, "png read error: " + path);

    png_init_io(r.png, fp.get());
    png_read_info(r.png, r.info);

    const png_uint_32 width = png_get_image_width(r.png, r.info);
    const png_uint_32 height = png_get_image_height(r.png, r.info);
    const png_byte color_type = png_get_color_type(r.png, r.info);
    const png_byte bit_depth = png_get_bit_depth(r.png, r.info);

    if (bit_depth == 16) png_set_strip_16(r.png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(r.png);
    png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);

    ImageRGB out(static_cast<int>(width), static_cast<int>(height));
    std::vector<png_bytep> rows(height);
    const std::size_t stride = static_cast<std::size_t>(width) * 3;
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = out.data.data() + y * stride;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
    return out;
}

}  // namespace

void write_png(const std::string& path, const ImageGray& image) {
    write_png_impl(path, image.width, image.height, 1, image.data.data());
}

void write_png(const std::string& path, const ImageRGB& image) {
    write_png_impl(path, image.width, image.height, 3, image.data.data());
}

ImageRGB read_png_rgb(const std::string& path) { return read_png_impl(path); }

ImageGray read_png_gray(const std::string& path) { return to_gray_ccir601(read_png_impl(path)); }

}  // namespace retino::img
