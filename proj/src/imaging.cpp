#include "funcarea/imaging.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "funcarea/errors.hpp"

namespace funcarea {

std::ostream& operator<<(std::ostream& os, const BoundingBox& box) {
    return os << box.x_min << ' ' << box.y_min << ' ' << box.x_max << ' ' << box.y_max;
}

BoundingBox intersection(const BoundingBox& a, const BoundingBox& b) noexcept {
    return {std::max(a.x_min, b.x_min), std::max(a.y_min, b.y_min), std::min(a.x_max, b.x_max),
            std::min(a.y_max, b.y_max)};
}

long long intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept {
    const BoundingBox overlap = intersection(a, b);
    return overlap.valid() ? overlap.area() : 0;
}

BoundingBox enclosing(const BoundingBox& a, const BoundingBox& b) noexcept {
    return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min), std::max(a.x_max, b.x_max),
            std::max(a.y_max, b.y_max)};
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const long long inter = intersection_area(a, b);
    const long long uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

const char* to_string(ColorSpace space) noexcept {
    switch (space) {
        case ColorSpace::RGB: return "rgb";
        case ColorSpace::HSV: return "hsv";
        case ColorSpace::Intensity: return "intensity";
    }
    return "?";
}

ColorSpace color_space_from_string(const std::string& name) {
    std::string lower;
    std::transform(name.begin(), name.end(), std::back_inserter(lower),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "rgb") return ColorSpace::RGB;
    if (lower == "hsv") return ColorSpace::HSV;
    if (lower == "intensity" || lower == "gray") return ColorSpace::Intensity;
    throw InvalidInput("unknown color space '" + name + "'");
}

Image::Image(int width, int height, int channels, float fill)
    : Image(width, height, channels,
            std::vector<float>(static_cast<std::size_t>(std::max(width, 0)) *
                                   static_cast<std::size_t>(std::max(height, 0)) *
                                   static_cast<std::size_t>(std::max(channels, 0)),
                               fill)) {}

Image::Image(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 1 || height < 1) throw InvalidInput("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw InvalidInput("image must have 1 or 3 channels");
    if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
        throw InvalidInput("image data length does not match dimensions");
    }
    for (float v : data_) {
        if (!(v >= 0.0F && v <= 1.0F)) throw InvalidInput("image intensities must lie in [0,1]");
    }
}

Image extract_patch(const Image& img, const BoundingBox& box) {
    const BoundingBox clipped = intersection(box, img.bounds());
    if (!clipped.valid()) throw InvalidRegion("box lies outside the image");
    Image out(clipped.width(), clipped.height(), img.channels());
    for (int y = 0; y < clipped.height(); ++y) {
        for (int x = 0; x < clipped.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = img.at(clipped.x_min + x, clipped.y_min + y, c);
            }
        }
    }
    return out;
}

namespace {

struct Tap {
    int lo;
    int hi;
    double frac;
};

std::vector<Tap> sample_taps(int src, int dst) {
    std::vector<Tap> taps(static_cast<std::size_t>(dst));
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (int i = 0; i < dst; ++i) {
        double pos = (i + 0.5) * scale - 0.5;
        pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
        const int lo = static_cast<int>(std::floor(pos));
        const int hi = std::min(lo + 1, src - 1);
        taps[static_cast<std::size_t>(i)] = {lo, hi, pos - lo};
    }
    return taps;
}

}  // namespace

Image resize_bilinear(const Image& img, int width, int height) {
    if (width < 1 || height < 1) throw InvalidInput("resize target must be at least 1x1");
    if (width == img.width() && height == img.height()) return img;
    const auto xs = sample_taps(img.width(), width);
    const auto ys = sample_taps(img.height(), height);
    Image out(width, height, img.channels());
    for (int y = 0; y < height; ++y) {
        const Tap& ty = ys[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            const Tap& tx = xs[static_cast<std::size_t>(x)];
            for (int c = 0; c < img.channels(); ++c) {
                const double top = (1.0 - tx.frac) * img.at(tx.lo, ty.lo, c) + tx.frac * img.at(tx.hi, ty.lo, c);
                const double bottom = (1.0 - tx.frac) * img.at(tx.lo, ty.hi, c) + tx.frac * img.at(tx.hi, ty.hi, c);
                const double v = (1.0 - ty.frac) * top + ty.frac * bottom;
                out.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

namespace {

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    double hue = 0.0;
    if (delta > 0.0) {
        if (mx == r) {
            hue = std::fmod((g - b) / delta, 6.0);
        } else if (mx == g) {
            hue = (b - r) / delta + 2.0;
        } else {
            hue = (r - g) / delta + 4.0;
        }
        hue /= 6.0;
        if (hue < 0.0) hue += 1.0;
    }
    const double sat = mx > 0.0 ? delta / mx : 0.0;
    return {std::clamp(hue, 0.0, 1.0), sat, mx};
}

}  // namespace

Image convert_color(const Image& img, ColorSpace space) {
    switch (space) {
        case ColorSpace::RGB:
            if (img.channels() != 3) throw InvalidInput("RGB conversion needs a 3-channel image");
            return img;
        case ColorSpace::HSV: {
            if (img.channels() != 3) throw InvalidInput("HSV conversion needs a 3-channel image");
            Image out(img.width(), img.height(), 3);
            for (int y = 0; y < img.height(); ++y) {
                for (int x = 0; x < img.width(); ++x) {
                    const auto hsv = rgb_to_hsv(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
                    for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(hsv[static_cast<std::size_t>(c)]);
                }
            }
            return out;
        }
        case ColorSpace::Intensity: {
            Image out(img.width(), img.height(), 1);
            for (int y = 0; y < img.height(); ++y) {
                for (int x = 0; x < img.width(); ++x) {
                    double sum = 0.0;
                    for (int c = 0; c < img.channels(); ++c) sum += img.at(x, y, c);
                    out.at(x, y, 0) = static_cast<float>(std::clamp(sum / img.channels(), 0.0, 1.0));
                }
            }
            return out;
        }
    }
    throw InvalidInput("unknown color space");
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        total += w;
    }
    for (double& w : kernel) w /= total;

    const int width = img.width();
    const int height = img.height();
    const int channels = img.channels();
    std::vector<double> tmp(img.data().size());
    auto tmp_at = [&](int x, int y, int c) -> double& {
        return tmp[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                       static_cast<std::size_t>(channels) +
                   static_cast<std::size_t>(c)];
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = std::clamp(x + i, 0, width - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * img.at(xx, y, c);
                }
                tmp_at(x, y, c) = acc;
            }
        }
    }
    Image out(width, height, channels);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = std::clamp(y + i, 0, height - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * tmp_at(x, yy, c);
                }
                out.at(x, y, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
    std::string token;
    int ch = 0;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch) != 0) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(static_cast<char>(ch));
    }
    return token;
}

int header_int(std::istream& in, const char* field) {
    const auto offset = static_cast<std::uint64_t>(std::max<std::streamoff>(in.tellg(), 0));
    const std::string token = header_token(in);
    try {
        std::size_t used = 0;
        const int value = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return value;
    } catch (const std::exception&) {
        throw FormatError(std::string("bad PNM ") + field + " '" + token + "'", offset);
    }
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open image " + path.string());
    const std::string magic = header_token(in);
    int channels = 0;
    if (magic == "P6") {
        channels = 3;
    } else if (magic == "P5") {
        channels = 1;
    } else {
        throw FormatError("unsupported image format '" + magic + "' in " + path.string(), 0);
    }
    const int width = header_int(in, "width");
    const int height = header_int(in, "height");
    const int maxval = header_int(in, "maxval");
    if (width < 1 || height < 1) throw FormatError("non-positive image size in " + path.string(), 3);
    if (maxval != 255) throw FormatError("only maxval 255 is supported in " + path.string(), 3);
    const auto data_start = static_cast<std::uint64_t>(in.tellg());
    const std::size_t count =
        static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels);
    std::vector<unsigned char> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
        throw FormatError("truncated pixel data in " + path.string(),
                          data_start + static_cast<std::uint64_t>(in.gcount()));
    }
    std::vector<float> data(count);
    std::transform(bytes.begin(), bytes.end(), data.begin(),
                   [](unsigned char b) { return static_cast<float>(b) / 255.0F; });
    return Image(width, height, channels, std::move(data));
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) throw InvalidInput("PNM output needs 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write image " + path.string());
    out << (img.channels() == 3 ? "P6" : "P5") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
    std::vector<unsigned char> bytes(img.data().size());
    std::transform(img.data().begin(), img.data().end(), bytes.begin(), [](float v) {
        return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0F, 1.0F) * 255.0F));
    });
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInput("failed writing image " + path.string());
}

}  // namespace funcarea
