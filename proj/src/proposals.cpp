#include "funcarea/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <queue>
#include <set>
#include <tuple>

#include "funcarea/errors.hpp"
#include "funcarea/random.hpp"

namespace funcarea {

std::vector<Strategy> quality_preset() {
    std::vector<Strategy> out;
    for (ColorSpace space : {ColorSpace::RGB, ColorSpace::HSV, ColorSpace::Intensity}) {
        for (double k : {50.0, 100.0, 150.0, 300.0}) {
            out.push_back({space, k, {1.0, 1.0, 1.0, 1.0}, 0.8});
            out.push_back({space, k, {0.0, 1.0, 1.0, 1.0}, 0.8});
        }
    }
    return out;
}

std::vector<Strategy> fast_preset() {
    return {{ColorSpace::HSV, 100.0, {1.0, 1.0, 1.0, 1.0}, 0.8},
            {ColorSpace::HSV, 200.0, {1.0, 1.0, 1.0, 1.0}, 0.8}};
}

std::vector<Strategy> strategy_preset(const std::string& name) {
    if (name == "fast") return fast_preset();
    if (name == "quality") return quality_preset();
    throw InvalidInput("unknown strategy preset '" + name + "' (expected fast or quality)");
}

namespace {

int color_bin(double v) {
    return std::clamp(static_cast<int>(std::floor(v * kColorBins)), 0, kColorBins - 1);
}

// Largest central-difference gradient magnitude on [0,1] data.
constexpr double kMaxGradient = 0.70710678118654752;

struct GradientBins {
    std::vector<int> bins;  // per pixel and channel
};

GradientBins texture_bins(const Image& img) {
    const int width = img.width();
    const int height = img.height();
    const int channels = img.channels();
    GradientBins out;
    out.bins.resize(img.pixel_count() * static_cast<std::size_t>(channels));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const double gx = 0.5 * (img.at(std::min(x + 1, width - 1), y, c) - img.at(std::max(x - 1, 0), y, c));
                const double gy = 0.5 * (img.at(x, std::min(y + 1, height - 1), c) - img.at(x, std::max(y - 1, 0), c));
                const double angle = std::atan2(gy, gx) + std::numbers::pi;
                const int orient = std::clamp(static_cast<int>(angle / (2.0 * std::numbers::pi) * kOrientationBins), 0,
                                              kOrientationBins - 1);
                const double mag = std::hypot(gx, gy);
                const int mbin =
                    std::clamp(static_cast<int>(mag / kMaxGradient * kMagnitudeBins), 0, kMagnitudeBins - 1);
                const std::size_t p =
                    static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
                out.bins[p * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)] =
                    orient * kMagnitudeBins + mbin;
            }
        }
    }
    return out;
}

void normalize(std::vector<double>& hist) {
    double total = 0.0;
    for (double v : hist) total += v;
    if (total > 0.0) {
        for (double& v : hist) v /= total;
    }
}

double intersect(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) s += std::min(a[i], b[i]);
    return s;
}

}  // namespace

std::vector<RegionNode> region_features(const Image& img, const SegmentMap& seg) {
    if (seg.width != img.width() || seg.height != img.height()) {
        throw InvalidInput("segment map does not match image dimensions");
    }
    const int channels = img.channels();
    const auto n = static_cast<std::size_t>(seg.segment_count);
    std::vector<RegionNode> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i].id = static_cast<int>(i);
        nodes[i].bbox = {img.width(), img.height(), 0, 0};
        nodes[i].color_hist.assign(static_cast<std::size_t>(channels * kColorBins), 0.0);
        nodes[i].texture_hist.assign(static_cast<std::size_t>(channels * kTextureBins), 0.0);
    }
    const GradientBins grads = texture_bins(img);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            RegionNode& node = nodes[static_cast<std::size_t>(seg.label(x, y))];
            ++node.size;
            node.bbox.x_min = std::min(node.bbox.x_min, x);
            node.bbox.y_min = std::min(node.bbox.y_min, y);
            node.bbox.x_max = std::max(node.bbox.x_max, x + 1);
            node.bbox.y_max = std::max(node.bbox.y_max, y + 1);
            const std::size_t p =
                static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x);
            for (int c = 0; c < channels; ++c) {
                node.color_hist[static_cast<std::size_t>(c * kColorBins + color_bin(img.at(x, y, c)))] += 1.0;
                node.texture_hist[static_cast<std::size_t>(
                    c * kTextureBins + grads.bins[p * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)])] +=
                    1.0;
            }
        }
    }
    for (RegionNode& node : nodes) {
        normalize(node.color_hist);
        normalize(node.texture_hist);
    }
    return nodes;
}

std::vector<std::pair<int, int>> region_adjacency(const SegmentMap& seg) {
    std::set<std::pair<int, int>> pairs;
    auto add = [&](int a, int b) {
        if (a != b) pairs.emplace(std::min(a, b), std::max(a, b));
    };
    for (int y = 0; y < seg.height; ++y) {
        for (int x = 0; x < seg.width; ++x) {
            if (x + 1 < seg.width) add(seg.label(x, y), seg.label(x + 1, y));
            if (y + 1 < seg.height) add(seg.label(x, y), seg.label(x, y + 1));
        }
    }
    return {pairs.begin(), pairs.end()};
}

SimilarityTerms similarity_terms(const RegionNode& a, const RegionNode& b, std::size_t image_size) {
    const double total = static_cast<double>(image_size);
    const double sizes = static_cast<double>(a.size + b.size);
    SimilarityTerms t;
    t.color = std::clamp(intersect(a.color_hist, b.color_hist), 0.0, 1.0);
    t.texture = std::clamp(intersect(a.texture_hist, b.texture_hist), 0.0, 1.0);
    t.size = std::clamp(1.0 - sizes / total, 0.0, 1.0);
    const double hull = static_cast<double>(enclosing(a.bbox, b.bbox).area());
    t.fill = std::clamp(1.0 - (hull - sizes) / total, 0.0, 1.0);
    return t;
}

double similarity(const RegionNode& a, const RegionNode& b, std::size_t image_size, const SimilarityWeights& weights) {
    const SimilarityTerms t = similarity_terms(a, b, image_size);
    return weights.color * t.color + weights.texture * t.texture + weights.size * t.size + weights.fill * t.fill;
}

RegionNode merge_regions(const RegionNode& a, const RegionNode& b, int new_id) {
    RegionNode out;
    out.id = new_id;
    out.size = a.size + b.size;
    out.bbox = enclosing(a.bbox, b.bbox);
    out.left = a.id;
    out.right = b.id;
    const double wa = static_cast<double>(a.size) / static_cast<double>(out.size);
    const double wb = static_cast<double>(b.size) / static_cast<double>(out.size);
    auto blend = [&](const std::vector<double>& ha, const std::vector<double>& hb) {
        std::vector<double> h(ha.size());
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = wa * ha[i] + wb * hb[i];
        normalize(h);
        return h;
    };
    out.color_hist = blend(a.color_hist, b.color_hist);
    out.texture_hist = blend(a.texture_hist, b.texture_hist);
    return out;
}

namespace {

struct Candidate {
    double score;
    int a;
    int b;
};

// Max-heap order: higher score first, then lower (a, b).
struct CandidateOrder {
    bool operator()(const Candidate& x, const Candidate& y) const {
        if (x.score != y.score) return x.score < y.score;
        return std::tie(x.a, x.b) > std::tie(y.a, y.b);
    }
};

}  // namespace

std::vector<RegionNode> hierarchical_group(std::vector<RegionNode> regions,
                                           const std::vector<std::pair<int, int>>& adjacency,
                                           const SimilarityWeights& weights) {
    const std::size_t n = regions.size();
    if (n == 0) throw InvalidInput("hierarchical_group needs at least one region");
    for (std::size_t i = 0; i < n; ++i) {
        if (regions[i].id != static_cast<int>(i)) throw InvalidInput("region ids must be dense 0..n-1 in order");
    }
    std::size_t image_size = 0;
    for (const RegionNode& r : regions) image_size += r.size;

    std::vector<std::set<int>> neighbours(2 * n - 1);
    for (const auto& [a, b] : adjacency) {
        if (a == b || a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n) {
            throw InvalidInput("adjacency references an unknown region");
        }
        neighbours[static_cast<std::size_t>(a)].insert(b);
        neighbours[static_cast<std::size_t>(b)].insert(a);
    }

    std::vector<RegionNode>& nodes = regions;
    nodes.reserve(2 * n - 1);
    std::vector<bool> alive(2 * n - 1, false);
    std::fill(alive.begin(), alive.begin() + static_cast<std::ptrdiff_t>(n), true);
    std::size_t alive_count = n;

    std::priority_queue<Candidate, std::vector<Candidate>, CandidateOrder> heap;
    auto push = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        heap.push({similarity(nodes[static_cast<std::size_t>(a)], nodes[static_cast<std::size_t>(b)], image_size,
                              weights),
                   a, b});
    };
    for (std::size_t a = 0; a < n; ++a) {
        for (int b : neighbours[a]) {
            if (static_cast<int>(a) < b) push(static_cast<int>(a), b);
        }
    }

    while (alive_count > 1) {
        if (heap.empty()) {
            // Disconnected adjacency: let the remaining components compete pairwise.
            std::vector<int> live;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (alive[i]) live.push_back(static_cast<int>(i));
            }
            for (std::size_t i = 0; i < live.size(); ++i) {
                for (std::size_t j = i + 1; j < live.size(); ++j) {
                    neighbours[static_cast<std::size_t>(live[i])].insert(live[j]);
                    neighbours[static_cast<std::size_t>(live[j])].insert(live[i]);
                    push(live[i], live[j]);
                }
            }
        }
        const Candidate best = heap.top();
        heap.pop();
        const auto ia = static_cast<std::size_t>(best.a);
        const auto ib = static_cast<std::size_t>(best.b);
        if (!alive[ia] || !alive[ib]) continue;

        const int new_id = static_cast<int>(nodes.size());
        nodes.push_back(merge_regions(nodes[ia], nodes[ib], new_id));
        alive[ia] = alive[ib] = false;
        alive[static_cast<std::size_t>(new_id)] = true;
        --alive_count;

        std::set<int> merged;
        for (std::size_t src : {ia, ib}) {
            for (int nb : neighbours[src]) {
                if (alive[static_cast<std::size_t>(nb)]) merged.insert(nb);
            }
            neighbours[src].clear();
        }
        for (int nb : merged) {
            auto& other = neighbours[static_cast<std::size_t>(nb)];
            other.erase(best.a);
            other.erase(best.b);
            other.insert(new_id);
            push(nb, new_id);
        }
        neighbours[static_cast<std::size_t>(new_id)] = std::move(merged);
    }
    return nodes;
}

StrategyRun run_strategy(const Image& img, const Strategy& strategy, std::size_t min_size) {
    const Image converted = convert_color(img, strategy.color_space);
    const SegmentMap seg = oversegment(converted, {strategy.k, min_size, strategy.sigma});
    StrategyRun run;
    run.initial_regions = static_cast<std::size_t>(seg.segment_count);
    run.nodes = hierarchical_group(region_features(converted, seg), region_adjacency(seg), strategy.weights);
    return run;
}

ProposalSet propose(const Image& img, const std::vector<Strategy>& strategies, std::uint64_t seed,
                    const ProposeOptions& options) {
    if (strategies.empty()) throw InvalidInput("at least one strategy is required");
    const std::size_t min_size =
        options.min_size > 0 ? options.min_size : default_min_segment_size(img.width(), img.height());

    // Lowest priority per distinct box.
    std::map<BoundingBox, double> best;
    for (std::size_t s = 0; s < strategies.size(); ++s) {
        const StrategyRun run = run_strategy(img, strategies[s], min_size);
        const std::size_t total = run.nodes.size();
        for (std::size_t i = 0; i < total; ++i) {
            const BoundingBox& box = run.nodes[i].bbox;
            if (box.area() < options.min_area) continue;
            Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(i)}));
            const double rank = static_cast<double>(total - i);
            const double priority = rank * rng.uniform();
            auto [it, inserted] = best.emplace(box, priority);
            if (!inserted) it->second = std::min(it->second, priority);
        }
    }

    std::vector<std::pair<double, BoundingBox>> order;
    order.reserve(best.size());
    for (const auto& [box, priority] : best) order.emplace_back(priority, box);
    std::sort(order.begin(), order.end());

    ProposalSet out;
    out.source_count = static_cast<int>(strategies.size());
    out.boxes.reserve(order.size());
    for (const auto& entry : order) out.boxes.push_back(entry.second);
    return out;
}

}  // namespace funcarea
