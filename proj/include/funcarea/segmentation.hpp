#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "funcarea/imaging.hpp"

namespace funcarea {

/// Dense per-pixel segment labels, row-major.
struct SegmentMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels;
    int segment_count = 0;

    int label(int x, int y) const noexcept {
        return labels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
    /// Pixel count per segment id.
    std::vector<std::size_t> segment_sizes() const;
};

/// 4-neighbour graph edge between pixel indices u < v.
struct PixelEdge {
    std::size_t u = 0;
    std::size_t v = 0;
    double weight = 0.0;
};

struct OversegmentOptions {
    /// Merge scale: larger values favour larger segments.
    double k = 100.0;
    /// Segments below this size are absorbed by their cheapest neighbour.
    std::size_t min_size = 1;
    /// Gaussian pre-smoothing; 0 disables.
    double sigma = 0.0;
};

/// Edge weight scale: color distances are measured on 0..255 intensities so
/// merge scales carry the same meaning as for 8-bit images.
inline constexpr double kEdgeIntensityScale = 255.0;

/// All 4-neighbour edges, sorted by (weight, u, v).
std::vector<PixelEdge> build_pixel_graph(const Image& img);

/// Greedy graph-based over-segmentation (edge-sorted union-find merging with
/// the adaptive Int(C) + k/|C| threshold, followed by a min-size pass).
SegmentMap oversegment(const Image& img, const OversegmentOptions& options);

/// floor(max(height,width)/100), at least 1.
std::size_t default_min_segment_size(int width, int height) noexcept;

/// Writes the label map as a P6 image with one pseudo-color per label and a
/// sidecar text file with `label pixel_count` lines.
void write_segment_map(const std::filesystem::path& image_path, const std::filesystem::path& sidecar_path,
                       const SegmentMap& seg);

}  // namespace funcarea
