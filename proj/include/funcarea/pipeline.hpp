#pragma once

#include <cstdint>
#include <vector>

#include "funcarea/evaluation.hpp"
#include "funcarea/neuralnet.hpp"
#include "funcarea/proposals.hpp"

namespace funcarea {

struct DetectorConfig {
    std::vector<Strategy> strategies = fast_preset();
    ProposeOptions propose_options;
    /// Detections below this softmax probability are dropped.
    double confidence_cutoff = 0.0;
    bool apply_nms = false;
    double nms_threshold = 0.3;
    std::uint64_t seed = 1;
};

/// Class probabilities for every box, in the given order.
std::vector<ProbabilityVector> classify_boxes(const Image& img, const Checkpoint& model,
                                              const std::vector<BoundingBox>& boxes);

/// Keeps boxes whose argmax is an end category with confidence >= cutoff.
std::vector<Detection> detections_from_scores(const std::vector<BoundingBox>& boxes,
                                              const std::vector<ProbabilityVector>& scores, double confidence_cutoff);

/// Classification stage on precomputed proposals.
std::vector<Detection> detect_on_proposals(const Image& img, const Checkpoint& model, const ProposalSet& proposals,
                                           const DetectorConfig& config);

/// propose -> crop/resize -> forward -> argmax filter (-> optional NMS).
std::vector<Detection> detect(const Image& img, const Checkpoint& model, const DetectorConfig& config);

/// Proposal seed for image `index` of a dataset run.
std::uint64_t image_seed(std::uint64_t seed, std::size_t index) noexcept;

inline constexpr int kBorderWidth = 2;
inline constexpr int kLegendHeight = 10;

/// Image with 2-px box borders in category colors (lower confidence drawn
/// first) and a legend strip of the twelve category colors appended below.
Image render_overlay(const Image& img, const std::vector<Detection>& detections);

}  // namespace funcarea
