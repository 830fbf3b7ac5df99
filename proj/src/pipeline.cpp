#include "funcarea/pipeline.hpp"

#include <algorithm>

#include "funcarea/dataset.hpp"
#include "funcarea/errors.hpp"
#include "funcarea/random.hpp"

namespace funcarea {

std::vector<ProbabilityVector> classify_boxes(const Image& img, const Checkpoint& model,
                                              const std::vector<BoundingBox>& boxes) {
    std::vector<ProbabilityVector> out;
    out.reserve(boxes.size());
    for (const BoundingBox& box : boxes) {
        out.push_back(predict(model.net, model.params, patch_to_input(model.net, extract_patch(img, box))));
    }
    return out;
}

std::vector<Detection> detections_from_scores(const std::vector<BoundingBox>& boxes,
                                              const std::vector<ProbabilityVector>& scores, double confidence_cutoff) {
    if (boxes.size() != scores.size()) throw InvalidInput("one score vector per box is required");
    std::vector<Detection> out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto label = static_cast<int>(scores[i].argmax());
        const double confidence = scores[i].p[static_cast<std::size_t>(label)];
        if (label == kBackgroundId || label >= kEndCategoryCount || confidence < confidence_cutoff) continue;
        out.push_back({boxes[i], label, confidence});
    }
    return out;
}

std::vector<Detection> detect_on_proposals(const Image& img, const Checkpoint& model, const ProposalSet& proposals,
                                           const DetectorConfig& config) {
    auto dets = detections_from_scores(proposals.boxes, classify_boxes(img, model, proposals.boxes),
                                       config.confidence_cutoff);
    if (config.apply_nms) dets = nms(std::move(dets), config.nms_threshold);
    return dets;
}

std::vector<Detection> detect(const Image& img, const Checkpoint& model, const DetectorConfig& config) {
    if (img.channels() != model.net.input.maps) throw ShapeError("image channels do not match the model input");
    const ProposalSet proposals = propose(img, config.strategies, config.seed, config.propose_options);
    return detect_on_proposals(img, model, proposals, config);
}

std::uint64_t image_seed(std::uint64_t seed, std::size_t index) noexcept {
    return derive_seed(seed, {0x70726f70ULL, static_cast<std::uint64_t>(index)});
}

Image render_overlay(const Image& img, const std::vector<Detection>& detections) {
    const Image base = img.channels() == 3 ? img : [&] {
        Image rgb(img.width(), img.height(), 3);
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = img.at(x, y, 0);
            }
        }
        return rgb;
    }();

    Image out(base.width(), base.height() + kLegendHeight, 3);
    for (int y = 0; y < base.height(); ++y) {
        for (int x = 0; x < base.width(); ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = base.at(x, y, c);
        }
    }

    std::vector<Detection> order = detections;
    std::stable_sort(order.begin(), order.end(), detection_before);
    std::reverse(order.begin(), order.end());
    for (const Detection& d : order) {
        const BoundingBox box = intersection(d.box, base.bounds());
        if (!box.valid()) continue;
        const auto& color = ontology().at(static_cast<std::size_t>(d.category)).display_color;
        for (int y = box.y_min; y < box.y_max; ++y) {
            for (int x = box.x_min; x < box.x_max; ++x) {
                const bool border = x < box.x_min + kBorderWidth || x >= box.x_max - kBorderWidth ||
                                    y < box.y_min + kBorderWidth || y >= box.y_max - kBorderWidth;
                if (!border) continue;
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = color[static_cast<std::size_t>(c)];
            }
        }
    }

    for (int y = base.height(); y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            const int category = std::min(x * kCategoryCount / out.width(), kCategoryCount - 1);
            const auto& color = ontology()[static_cast<std::size_t>(category)].display_color;
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = color[static_cast<std::size_t>(c)];
        }
    }
    return out;
}

}  // namespace funcarea
