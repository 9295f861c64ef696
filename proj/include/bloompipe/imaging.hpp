#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bloompipe/detection.hpp"

namespace bloompipe {

using Rgb = std::array<std::uint8_t, 3>;

/// Packed 8-bit RGB raster, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, Rgb fill = {0, 0, 0});

    Rgb at(int x, int y) const {
        const auto* p = &pixels[(std::size_t(y) * width + x) * 3];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) {
        auto* p = &pixels[(std::size_t(y) * width + x) * 3];
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }

    bool operator==(const Image&) const = default;
};

enum class ImageFormat { Jpeg, Png, Unknown };

ImageFormat sniff_format(std::string_view bytes);

/// Decodes JPEG or PNG into RGB. Throws Error{Decode}.
Image decode_image(std::string_view bytes);

/// Throws Error{Encode}.
std::string encode_jpeg(const Image& image, int quality);
std::string encode_png(const Image& image);

inline constexpr int kDefaultJpegQuality = 30;

/// Re-encodes JPEG/PNG input as JPEG at `quality` (1-100).
std::string compress_jpeg(std::string_view bytes, int quality = kDefaultJpegQuality);

/// Splits into `count` full-height vertical strips. The first count-1 strips
/// are floor(W/count) wide; the last takes the remainder. Throws
/// Error{BadSliceCount} when count < 1 or count > width.
std::vector<Image> slice_vertical(const Image& image, int count);

/// Left-to-right concatenation of equal-height images.
Image concat_horizontal(std::span<const Image> parts);

struct DimensionCheck {
    bool ok = false;
    int actual_width = 0;
    int actual_height = 0;
};

DimensionCheck validate_dims(const Image& image, int expected_width, int expected_height);

struct RenderStyle {
    int thickness = 2;
    Rgb color{255, 0, 0};
    bool label = false;
};

/// Pixel coordinate of a normalized edge: round-half-up, clamped to [0, extent-1].
int denormalize(double v, int extent);

/// Draws box outlines (and optional "label score" captions) onto a copy of
/// `image`. Strokes grow inward from the denormalized box edges.
/// Throws Error{InvalidBox}.
Image render_boxes(const Image& image, std::span<const Detection> detections,
                   const RenderStyle& style = {});

}  // namespace bloompipe
