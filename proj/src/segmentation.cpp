#include "funcarea/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

#include "funcarea/errors.hpp"
#include "funcarea/random.hpp"

namespace funcarea {

std::vector<std::size_t> SegmentMap::segment_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(segment_count), 0);
    for (int id : labels) ++sizes[static_cast<std::size_t>(id)];
    return sizes;
}

namespace {

class DisjointSet {
public:
    explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // Joins two roots; the larger tree (then the lower index) stays the root.
    std::size_t join(std::size_t a, std::size_t b, double weight) {
        if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        internal_[a] = std::max({internal_[a], internal_[b], weight});
        return a;
    }

    std::size_t size(std::size_t root) const { return size_[root]; }
    double internal(std::size_t root) const { return internal_[root]; }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
    std::vector<double> internal_;
};

}  // namespace

std::vector<PixelEdge> build_pixel_graph(const Image& img) {
    const int width = img.width();
    const int height = img.height();
    std::vector<PixelEdge> edges;
    edges.reserve(img.pixel_count() * 2);
    auto distance = [&](int x0, int y0, int x1, int y1) {
        double sum = 0.0;
        for (int c = 0; c < img.channels(); ++c) {
            const double d = (static_cast<double>(img.at(x0, y0, c)) - img.at(x1, y1, c)) * kEdgeIntensityScale;
            sum += d * d;
        }
        return std::sqrt(sum);
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto u = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
            if (x + 1 < width) edges.push_back({u, u + 1, distance(x, y, x + 1, y)});
            if (y + 1 < height) edges.push_back({u, u + static_cast<std::size_t>(width), distance(x, y, x, y + 1)});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const PixelEdge& a, const PixelEdge& b) {
        return std::tie(a.weight, a.u, a.v) < std::tie(b.weight, b.u, b.v);
    });
    return edges;
}

SegmentMap oversegment(const Image& img, const OversegmentOptions& options) {
    if (!(options.k > 0.0)) throw InvalidInput("merge scale k must be positive");
    if (options.min_size < 1) throw InvalidInput("min_size must be at least 1");

    const Image smoothed = gaussian_blur(img, options.sigma);
    const std::vector<PixelEdge> edges = build_pixel_graph(smoothed);
    DisjointSet sets(img.pixel_count());

    for (const PixelEdge& e : edges) {
        const std::size_t a = sets.find(e.u);
        const std::size_t b = sets.find(e.v);
        if (a == b) continue;
        const double limit_a = sets.internal(a) + options.k / static_cast<double>(sets.size(a));
        const double limit_b = sets.internal(b) + options.k / static_cast<double>(sets.size(b));
        if (e.weight <= std::min(limit_a, limit_b)) sets.join(a, b, e.weight);
    }

    // Small components go to the neighbour across their cheapest edge; the
    // sorted edge order visits that edge first.
    for (const PixelEdge& e : edges) {
        const std::size_t a = sets.find(e.u);
        const std::size_t b = sets.find(e.v);
        if (a == b) continue;
        if (sets.size(a) < options.min_size || sets.size(b) < options.min_size) sets.join(a, b, e.weight);
    }

    SegmentMap seg;
    seg.width = img.width();
    seg.height = img.height();
    seg.labels.assign(img.pixel_count(), -1);
    std::vector<int> dense(img.pixel_count(), -1);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const std::size_t root = sets.find(p);
        if (dense[root] < 0) dense[root] = seg.segment_count++;
        seg.labels[p] = dense[root];
    }
    return seg;
}

std::size_t default_min_segment_size(int width, int height) noexcept {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(width, height)) / 100);
}

void write_segment_map(const std::filesystem::path& image_path, const std::filesystem::path& sidecar_path,
                       const SegmentMap& seg) {
    Image out(seg.width, seg.height, 3);
    for (int y = 0; y < seg.height; ++y) {
        for (int x = 0; x < seg.width; ++x) {
            const std::uint64_t h = mix64(static_cast<std::uint64_t>(seg.label(x, y)));
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = static_cast<float>((h >> (8 * c)) & 0xFFU) / 255.0F;
            }
        }
    }
    write_pnm(image_path, out);

    std::ofstream side(sidecar_path);
    if (!side) throw InvalidInput("cannot write " + sidecar_path.string());
    side << "# label pixel_count\n";
    const auto sizes = seg.segment_sizes();
    for (std::size_t i = 0; i < sizes.size(); ++i) side << i << ' ' << sizes[i] << '\n';
}

}  // namespace funcarea
