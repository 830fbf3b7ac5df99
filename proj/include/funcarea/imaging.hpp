#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace funcarea {

/// Half-open pixel rectangle: columns [x_min, x_max), rows [y_min, y_max).
struct BoundingBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 1;
    int y_max = 1;

    int width() const noexcept { return x_max - x_min; }
    int height() const noexcept { return y_max - y_min; }
    long long area() const noexcept {
        return static_cast<long long>(width()) * static_cast<long long>(height());
    }
    bool valid() const noexcept { return x_min < x_max && y_min < y_max; }

    auto operator<=>(const BoundingBox&) const = default;
};

std::ostream& operator<<(std::ostream& os, const BoundingBox& box);

/// Returns the overlap of two boxes, or an invalid box (area 0 semantics) when
/// they are disjoint. Check with `valid()`.
BoundingBox intersection(const BoundingBox& a, const BoundingBox& b) noexcept;
long long intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept;
/// Smallest box enclosing both.
BoundingBox enclosing(const BoundingBox& a, const BoundingBox& b) noexcept;

/// Intersection over union. Both boxes must be valid.
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

enum class ColorSpace { RGB, HSV, Intensity };

const char* to_string(ColorSpace space) noexcept;
ColorSpace color_space_from_string(const std::string& name);

/// Raster with interleaved channels, intensities normalized to [0,1].
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, float fill = 0.0F);
    /// Validates dimensions, data length and value range.
    Image(int width, int height, int channels, std::vector<float> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    bool empty() const noexcept { return data_.empty(); }
    BoundingBox bounds() const noexcept { return {0, 0, width_, height_}; }

    float at(int x, int y, int c) const noexcept { return data_[index(x, y, c)]; }
    float& at(int x, int y, int c) noexcept { return data_[index(x, y, c)]; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    bool operator==(const Image&) const = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Crop `box` clipped to the image bounds. Throws InvalidRegion when the box
/// lies entirely outside the image.
Image extract_patch(const Image& img, const BoundingBox& box);

/// Bilinear resampling with center-aligned sample positions.
Image resize_bilinear(const Image& img, int width, int height);

/// RGB<->HSV needs three channels; Intensity (channel mean) accepts any count.
/// HSV components, including hue, are scaled to [0,1].
Image convert_color(const Image& img, ColorSpace space);

/// Separable Gaussian blur with edge clamping. sigma <= 0 returns a copy.
Image gaussian_blur(const Image& img, double sigma);

// Netpbm I/O. P6 for 3 channels, P5 for 1 channel; maxval 255.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& img);

}  // namespace funcarea
