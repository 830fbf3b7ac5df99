#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "funcarea/imaging.hpp"
#include "funcarea/segmentation.hpp"

namespace funcarea {

inline constexpr int kColorBins = 25;
inline constexpr int kOrientationBins = 8;
inline constexpr int kMagnitudeBins = 10;
inline constexpr int kTextureBins = kOrientationBins * kMagnitudeBins;

/// A segment (initial or merged) with the features used for grouping.
/// Histograms are L1-normalized over all channels together, so each channel
/// block carries 1/channels of the mass.
struct RegionNode {
    int id = 0;
    std::size_t size = 0;
    BoundingBox bbox;
    std::vector<double> color_hist;
    std::vector<double> texture_hist;
    int left = -1;  // children, -1 for initial regions
    int right = -1;
};

struct SimilarityWeights {
    double color = 1.0;
    double texture = 1.0;
    double size = 1.0;
    double fill = 1.0;
};

struct Strategy {
    ColorSpace color_space = ColorSpace::HSV;
    double k = 100.0;
    SimilarityWeights weights;
    double sigma = 0.8;
};

std::vector<Strategy> quality_preset();
std::vector<Strategy> fast_preset();
/// "fast" or "quality".
std::vector<Strategy> strategy_preset(const std::string& name);

struct ProposalSet {
    std::vector<BoundingBox> boxes;
    int source_count = 0;
};

/// One RegionNode per segment. `img` must already be in the strategy's color
/// space and match the segment map's size.
std::vector<RegionNode> region_features(const Image& img, const SegmentMap& seg);

/// Unordered pairs (a < b) of 4-adjacent segments, sorted.
std::vector<std::pair<int, int>> region_adjacency(const SegmentMap& seg);

struct SimilarityTerms {
    double color = 0.0;
    double texture = 0.0;
    double size = 0.0;
    double fill = 0.0;
};

/// Individual similarity components, each clamped to [0,1].
SimilarityTerms similarity_terms(const RegionNode& a, const RegionNode& b, std::size_t image_size);

double similarity(const RegionNode& a, const RegionNode& b, std::size_t image_size, const SimilarityWeights& weights);

/// Union of two regions with size-weighted histogram averaging.
RegionNode merge_regions(const RegionNode& a, const RegionNode& b, int new_id);

/// Greedy agglomeration of the most similar adjacent pair (ties: lowest id
/// pair) until one region remains. Returns the initial nodes followed by the
/// n-1 merged nodes in creation order.
std::vector<RegionNode> hierarchical_group(std::vector<RegionNode> regions,
                                           const std::vector<std::pair<int, int>>& adjacency,
                                           const SimilarityWeights& weights);

struct StrategyRun {
    std::vector<RegionNode> nodes;
    std::size_t initial_regions = 0;
};

/// Color conversion, over-segmentation, features and grouping for one strategy.
StrategyRun run_strategy(const Image& img, const Strategy& strategy, std::size_t min_size);

struct ProposeOptions {
    /// 0 means floor(max(h,w)/100).
    std::size_t min_size = 0;
    /// Boxes with smaller area are dropped; 0 keeps everything.
    long long min_area = 0;
};

/// Runs every strategy, pools all node boxes, removes exact duplicates and
/// orders them by a seeded randomized rank (rank within the hierarchy times a
/// uniform draw, lower first).
ProposalSet propose(const Image& img, const std::vector<Strategy>& strategies, std::uint64_t seed,
                    const ProposeOptions& options = {});

}  // namespace funcarea
