#include "sfea/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace sfea {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads any PNG into 8-bit rows. `expand_to_rgb` converts palette/gray/alpha
// variants to RGB; otherwise palette indices and gray bytes pass through raw.
struct Decoded {
    png_uint_32 width = 0, height = 0;
    int channels = 0;
    std::vector<unsigned char> pixels;  // row-major, tightly packed
};

Decoded decode_png(const std::string& path, bool expand_to_rgb) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open PNG for reading: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng initialization failed");
    }

    Decoded out;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt or truncated PNG: " + path);
    }

    png_init_io(png, f.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (expand_to_rgb) {
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
    } else {
        // Raw single-channel path: unpack sub-byte depths, keep indices as-is.
        if (depth < 8) png_set_packing(png);
        if (color == PNG_COLOR_TYPE_GRAY_ALPHA || color == PNG_COLOR_TYPE_RGB_ALPHA)
            png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    out.width = w;
    out.height = h;
    out.channels = static_cast<int>(png_get_channels(png, info));
    std::size_t rowbytes = png_get_rowbytes(png, info);
    out.pixels.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = out.pixels.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void encode_png(const std::string& path, png_uint_32 w, png_uint_32 h, int color_type,
                const std::vector<unsigned char>& pixels, std::size_t rowbytes) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot open PNG for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng initialization failed");
    }

    std::vector<png_const_bytep> rows(h);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path);
    }

    png_init_io(png, f.get());
    png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * rowbytes;
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

unsigned char to_byte(double v) {
    double scaled = std::lround(v * 255.0);
    if (scaled < 0.0) scaled = 0.0;
    if (scaled > 255.0) scaled = 255.0;
    return static_cast<unsigned char>(scaled);
}

}  // namespace

ImageTensor read_image_png(const std::string& path) {
    Decoded d = decode_png(path, /*expand_to_rgb=*/true);
    if (d.channels != 3) throw DataError("expected RGB after expansion: " + path);
    Tensor t(static_cast<int>(d.height), static_cast<int>(d.width), 3);
    auto vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = d.pixels[i] / 255.0;
    try {
        return ImageTensor(std::move(t));
    } catch (const ContractError& e) {
        throw DataError(std::string("invalid image ") + path + ": " + e.what());
    }
}

void write_image_png(const ImageTensor& img, const std::string& path) {
    const int h = img.height(), w = img.width();
    std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
    auto vals = img.tensor().values();
    for (std::size_t i = 0; i < vals.size(); ++i) bytes[i] = to_byte(vals[i]);
    encode_png(path, w, h, PNG_COLOR_TYPE_RGB, bytes, static_cast<std::size_t>(w) * 3);
}

MaskTensor read_mask_png(const std::string& path, int num_classes) {
    Decoded d = decode_png(path, /*expand_to_rgb=*/false);
    if (d.channels != 1) throw DataError("mask PNG must be single-channel: " + path);
    std::vector<int> labels(d.pixels.size());
    for (std::size_t i = 0; i < d.pixels.size(); ++i) {
        if (d.pixels[i] >= num_classes)
            throw DataError("mask pixel value " + std::to_string(d.pixels[i]) +
                            " exceeds class count in " + path);
        labels[i] = d.pixels[i];
    }
    try {
        return MaskTensor::from_labels(static_cast<int>(d.height), static_cast<int>(d.width),
                                       num_classes, labels);
    } catch (const ContractError& e) {
        throw DataError(std::string("invalid mask ") + path + ": " + e.what());
    }
}

void write_mask_png(const MaskTensor& mask, const std::string& path) {
    const int h = mask.height(), w = mask.width();
    std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            bytes[static_cast<std::size_t>(y) * w + x] = static_cast<unsigned char>(mask.label_at(y, x));
    encode_png(path, w, h, PNG_COLOR_TYPE_GRAY, bytes, static_cast<std::size_t>(w));
}

}  // namespace sfea
