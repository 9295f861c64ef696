#include "bloompipe/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

#include "bloompipe/error.hpp"

namespace bloompipe {

Image::Image(int w, int h, Rgb fill) : width(w), height(h), pixels(std::size_t(w) * h * 3) {
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill[0];
        pixels[i + 1] = fill[1];
        pixels[i + 2] = fill[2];
    }
}

ImageFormat sniff_format(std::string_view bytes) {
    if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
        static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
        return ImageFormat::Jpeg;
    }
    static constexpr unsigned char kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPng, 8) == 0) return ImageFormat::Png;
    return ImageFormat::Unknown;
}

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

// Only trivially destructible locals live between setjmp and longjmp here.
bool decode_jpeg_raw(std::string_view bytes, Image& out, char* message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_silent;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
                 static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.width = static_cast<int>(cinfo.output_width);
    out.height = static_cast<int>(cinfo.output_height);
    out.pixels.resize(std::size_t(out.width) * out.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.pixels.data() + std::size_t(cinfo.output_scanline) * out.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

bool encode_jpeg_raw(const Image& image, int quality, unsigned char** buffer, unsigned long* size,
                     char* message) {
    jpeg_compress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_silent;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, buffer, size);
    cinfo.image_width = static_cast<JDIMENSION>(image.width);
    cinfo.image_height = static_cast<JDIMENSION>(image.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPLE*>(image.pixels.data() +
                                         std::size_t(cinfo.next_scanline) * image.width * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

Image decode_jpeg(std::string_view bytes) {
    Image out;
    char message[JMSG_LENGTH_MAX] = {};
    if (!decode_jpeg_raw(bytes, out, message)) {
        throw Error(Errc::Decode, std::string("jpeg: ") + message);
    }
    if (out.width < 1 || out.height < 1) throw Error(Errc::Decode, "jpeg: empty image");
    return out;
}

Image decode_png(std::string_view bytes) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw Error(Errc::Decode, std::string("png: ") + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    Image out;
    out.width = static_cast<int>(png.width);
    out.height = static_cast<int>(png.height);
    out.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string message = png.message;
        png_image_free(&png);
        throw Error(Errc::Decode, "png: " + message);
    }
    return out;
}

void check_image(const Image& image) {
    if (image.width < 1 || image.height < 1 ||
        image.pixels.size() != std::size_t(image.width) * image.height * 3) {
        throw Error(Errc::Encode, "image buffer does not match its dimensions");
    }
}

}  // namespace

Image decode_image(std::string_view bytes) {
    switch (sniff_format(bytes)) {
        case ImageFormat::Jpeg: return decode_jpeg(bytes);
        case ImageFormat::Png: return decode_png(bytes);
        case ImageFormat::Unknown: break;
    }
    throw Error(Errc::Decode, "input is neither JPEG nor PNG");
}

std::string encode_jpeg(const Image& image, int quality) {
    if (quality < 1 || quality > 100) {
        throw Error(Errc::InvalidArgument, "jpeg quality must be 1-100");
    }
    check_image(image);
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    char message[JMSG_LENGTH_MAX] = {};
    const bool ok = encode_jpeg_raw(image, quality, &buffer, &size, message);
    std::string out;
    if (ok) out.assign(reinterpret_cast<const char*>(buffer), size);
    std::free(buffer);
    if (!ok) throw Error(Errc::Encode, std::string("jpeg: ") + message);
    return out;
}

std::string encode_png(const Image& image) {
    check_image(image);
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        throw Error(Errc::Encode, std::string("png: ") + png.message);
    }
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        throw Error(Errc::Encode, std::string("png: ") + png.message);
    }
    out.resize(size);
    return out;
}

std::string compress_jpeg(std::string_view bytes, int quality) {
    return encode_jpeg(decode_image(bytes), quality);
}

std::vector<Image> slice_vertical(const Image& image, int count) {
    if (count < 1 || count > image.width) {
        throw Error(Errc::BadSliceCount, "cannot cut width " + std::to_string(image.width) + " into " +
                                             std::to_string(count) + " slices");
    }
    const int base = image.width / count;
    std::vector<Image> slices;
    slices.reserve(count);
    int x0 = 0;
    for (int i = 0; i < count; ++i) {
        const int w = (i + 1 == count) ? image.width - x0 : base;
        Image slice(w, image.height);
        for (int y = 0; y < image.height; ++y) {
            const auto* src = &image.pixels[(std::size_t(y) * image.width + x0) * 3];
            std::copy_n(src, std::size_t(w) * 3, &slice.pixels[std::size_t(y) * w * 3]);
        }
        slices.push_back(std::move(slice));
        x0 += w;
    }
    return slices;
}

Image concat_horizontal(std::span<const Image> parts) {
    if (parts.empty()) throw Error(Errc::InvalidArgument, "nothing to concatenate");
    int width = 0;
    for (const auto& p : parts) {
        if (p.height != parts.front().height) {
            throw Error(Errc::InvalidArgument, "concatenated images must share a height");
        }
        width += p.width;
    }
    Image out(width, parts.front().height);
    int x0 = 0;
    for (const auto& p : parts) {
        for (int y = 0; y < p.height; ++y) {
            std::copy_n(&p.pixels[std::size_t(y) * p.width * 3], std::size_t(p.width) * 3,
                        &out.pixels[(std::size_t(y) * width + x0) * 3]);
        }
        x0 += p.width;
    }
    return out;
}

DimensionCheck validate_dims(const Image& image, int expected_width, int expected_height) {
    return {image.width == expected_width && image.height == expected_height, image.width,
            image.height};
}

int denormalize(double v, int extent) {
    const auto px = static_cast<int>(std::floor(v * extent + 0.5));
    return std::clamp(px, 0, extent - 1);
}

namespace {

// 3x5 glyphs, one string per row, '#' = ink.
struct Glyph {
    char c;
    const char* rows[5];
};

constexpr Glyph kGlyphs[] = {
    {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
    {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", ".##", "..#", "###"}},
    {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
    {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", ".#.", ".#.", ".#."}},
    {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
    {'.', {"...", "...", "...", "...", ".#."}}, {'-', {"...", "...", "###", "...", "..."}},
    {'a', {".#.", "#.#", "###", "#.#", "#.#"}}, {'b', {"##.", "#.#", "##.", "#.#", "##."}},
    {'c', {".##", "#..", "#..", "#..", ".##"}}, {'d', {"##.", "#.#", "#.#", "#.#", "##."}},
    {'e', {"###", "#..", "##.", "#..", "###"}}, {'f', {"###", "#..", "##.", "#..", "#.."}},
    {'g', {".##", "#..", "#.#", "#.#", ".##"}}, {'h', {"#.#", "#.#", "###", "#.#", "#.#"}},
    {'i', {"###", ".#.", ".#.", ".#.", "###"}}, {'j', {"..#", "..#", "..#", "#.#", ".#."}},
    {'k', {"#.#", "#.#", "##.", "#.#", "#.#"}}, {'l', {"#..", "#..", "#..", "#..", "###"}},
    {'m', {"#.#", "###", "###", "#.#", "#.#"}}, {'n', {"##.", "#.#", "#.#", "#.#", "#.#"}},
    {'o', {".#.", "#.#", "#.#", "#.#", ".#."}}, {'p', {"##.", "#.#", "##.", "#..", "#.."}},
    {'q', {".#.", "#.#", "#.#", "##.", ".##"}}, {'r', {"##.", "#.#", "##.", "#.#", "#.#"}},
    {'s', {".##", "#..", ".#.", "..#", "##."}}, {'t', {"###", ".#.", ".#.", ".#.", ".#."}},
    {'u', {"#.#", "#.#", "#.#", "#.#", "###"}}, {'v', {"#.#", "#.#", "#.#", "#.#", ".#."}},
    {'w', {"#.#", "#.#", "###", "###", "#.#"}}, {'x', {"#.#", "#.#", ".#.", "#.#", "#.#"}},
    {'y', {"#.#", "#.#", ".#.", ".#.", ".#."}}, {'z', {"###", "..#", ".#.", "#..", "###"}},
};

const Glyph* find_glyph(char c) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    for (const auto& g : kGlyphs)
        if (g.c == c) return &g;
    return nullptr;
}

void plot(Image& img, int x, int y, Rgb color) {
    if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.set(x, y, color);
}

void draw_text(Image& img, int x, int y, std::string_view text, Rgb color) {
    for (char c : text) {
        if (const auto* g = find_glyph(c)) {
            for (int row = 0; row < 5; ++row)
                for (int col = 0; col < 3; ++col)
                    if (g->rows[row][col] == '#') plot(img, x + col, y + row, color);
        }
        x += 4;
    }
}

std::string caption(const Detection& d) {
    char score[16];
    std::snprintf(score, sizeof score, "%.2f", d.score);
    return d.label + " " + score;
}

}  // namespace

Image render_boxes(const Image& image, std::span<const Detection> detections,
                   const RenderStyle& style) {
    for (const auto& d : detections) {
        if (!d.box.valid()) throw Error(Errc::InvalidBox, "cannot render an invalid box");
    }
    Image out = image;
    const int t = std::max(style.thickness, 1);
    for (const auto& d : detections) {
        const int x0 = denormalize(d.box.top_x, out.width);
        const int x1 = denormalize(d.box.bottom_x, out.width);
        const int y0 = denormalize(d.box.top_y, out.height);
        const int y1 = denormalize(d.box.bottom_y, out.height);
        for (int k = 0; k < t; ++k) {
            for (int x = x0; x <= x1; ++x) {
                plot(out, x, y0 + k, style.color);
                plot(out, x, y1 - k, style.color);
            }
            for (int y = y0; y <= y1; ++y) {
                plot(out, x0 + k, y, style.color);
                plot(out, x1 - k, y, style.color);
            }
        }
        if (style.label) {
            const int ty = y0 >= 6 ? y0 - 6 : y0 + t + 1;
            draw_text(out, x0, ty, caption(d), style.color);
        }
    }
    return out;
}

}  // namespace bloompipe
