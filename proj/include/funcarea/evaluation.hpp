#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "funcarea/dataset.hpp"
#include "funcarea/imaging.hpp"

namespace funcarea {

struct Detection {
    BoundingBox box;
    int category = 0;
    double confidence = 0.0;

    bool operator==(const Detection&) const = default;
};

/// Descending confidence, then box coordinates, then category.
bool detection_before(const Detection& a, const Detection& b) noexcept;

struct MatchResult {
    std::vector<Detection> true_positives;
    std::vector<Detection> false_positives;
    std::vector<Annotation> false_negatives;
};

/// Greedy one-to-one matching. A detection is a true positive when an
/// unmatched ground truth of the same category overlaps it with IOU strictly
/// above `iou_threshold`; the highest-IOU such ground truth is consumed.
MatchResult match_detections(const std::vector<Detection>& detections, const std::vector<Annotation>& ground_truth,
                             double iou_threshold = 0.5);

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

/// Harmonic mean 2pr/(p+r); 0 when p + r = 0.
double f1_score(double precision, double recall) noexcept;
MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) noexcept;
MetricsReport compute_metrics(const MatchResult& match) noexcept;

/// Detections and ground truth of one image.
struct ImageEvaluation {
    std::vector<Detection> detections;
    std::vector<Annotation> ground_truth;
};

/// Per-image matching with counts summed over images.
MetricsReport evaluate(const std::vector<ImageEvaluation>& images, double iou_threshold = 0.5,
                       double min_confidence = 0.0);

struct RocPoint {
    double threshold = 0.0;
    double false_positives_per_image = 0.0;
    double recall = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
};

/// Starts with a threshold above every confidence (point (0,0)) and then
/// sweeps each distinct confidence in descending order, keeping detections
/// with confidence >= threshold.
RocCurve roc_curve(const std::vector<ImageEvaluation>& images, double iou_threshold = 0.5);

struct ConfusionMatrix {
    std::array<std::array<std::size_t, kCategoryCount>, kCategoryCount> counts{};

    std::size_t row_sum(int true_class) const noexcept;
    std::size_t total() const noexcept;
};

/// Rows are true classes, columns predicted classes.
ConfusionMatrix confusion(const std::vector<std::pair<int, int>>& true_predicted);

/// Greedy same-class suppression of detections overlapping a kept one with
/// IOU above the threshold. Output is in detection_before order.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold = 0.3);

/// A detection tagged with the image it belongs to.
struct DetectionRecord {
    std::string image_ref;
    Detection detection;
};

/// `image_path x_min y_min x_max y_max category_name confidence` per line.
std::vector<DetectionRecord> parse_detections(std::istream& in);
std::vector<DetectionRecord> load_detections(const std::filesystem::path& path);
void write_detections(std::ostream& out, const std::vector<DetectionRecord>& records);

/// Builds per-image evaluation inputs; images appear in the order of first
/// mention across annotations, then detections.
std::vector<ImageEvaluation> pair_by_image(const std::vector<DetectionRecord>& detections,
                                           const std::vector<Annotation>& annotations);

}  // namespace funcarea
