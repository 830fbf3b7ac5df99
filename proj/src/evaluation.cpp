#include "funcarea/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "funcarea/errors.hpp"

namespace funcarea {

bool detection_before(const Detection& a, const Detection& b) noexcept {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return std::tie(a.box, a.category) < std::tie(b.box, b.category);
}

MatchResult match_detections(const std::vector<Detection>& detections, const std::vector<Annotation>& ground_truth,
                             double iou_threshold) {
    std::vector<Detection> ordered = detections;
    std::stable_sort(ordered.begin(), ordered.end(), detection_before);
    std::vector<bool> taken(ground_truth.size(), false);
    MatchResult result;
    for (const Detection& d : ordered) {
        int best = -1;
        double best_iou = iou_threshold;
        for (std::size_t g = 0; g < ground_truth.size(); ++g) {
            if (taken[g] || ground_truth[g].category != d.category) continue;
            const double overlap = iou(d.box, ground_truth[g].box);
            if (overlap > best_iou) {
                best_iou = overlap;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            taken[static_cast<std::size_t>(best)] = true;
            result.true_positives.push_back(d);
        } else {
            result.false_positives.push_back(d);
        }
    }
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        if (!taken[g]) result.false_negatives.push_back(ground_truth[g]);
    }
    return result;
}

double f1_score(double precision, double recall) noexcept {
    const double sum = precision + recall;
    return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) noexcept {
    MetricsReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = f1_score(r.precision, r.recall);
    return r;
}

MetricsReport compute_metrics(const MatchResult& match) noexcept {
    return metrics_from_counts(match.true_positives.size(), match.false_positives.size(), match.false_negatives.size());
}

namespace {

std::vector<Detection> at_least(const std::vector<Detection>& dets, double threshold) {
    std::vector<Detection> kept;
    std::copy_if(dets.begin(), dets.end(), std::back_inserter(kept),
                 [&](const Detection& d) { return d.confidence >= threshold; });
    return kept;
}

}  // namespace

MetricsReport evaluate(const std::vector<ImageEvaluation>& images, double iou_threshold, double min_confidence) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (const ImageEvaluation& img : images) {
        const MatchResult m = match_detections(at_least(img.detections, min_confidence), img.ground_truth, iou_threshold);
        tp += m.true_positives.size();
        fp += m.false_positives.size();
        fn += m.false_negatives.size();
    }
    return metrics_from_counts(tp, fp, fn);
}

RocCurve roc_curve(const std::vector<ImageEvaluation>& images, double iou_threshold) {
    std::vector<double> thresholds;
    for (const ImageEvaluation& img : images) {
        for (const Detection& d : img.detections) thresholds.push_back(d.confidence);
    }
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double image_count = images.empty() ? 1.0 : static_cast<double>(images.size());
    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (double t : thresholds) {
        const MetricsReport m = evaluate(images, iou_threshold, t);
        curve.points.push_back({t, static_cast<double>(m.fp) / image_count, m.recall});
    }
    return curve;
}

std::size_t ConfusionMatrix::row_sum(int true_class) const noexcept {
    std::size_t s = 0;
    for (std::size_t v : counts[static_cast<std::size_t>(true_class)]) s += v;
    return s;
}

std::size_t ConfusionMatrix::total() const noexcept {
    std::size_t s = 0;
    for (int r = 0; r < kCategoryCount; ++r) s += row_sum(r);
    return s;
}

ConfusionMatrix confusion(const std::vector<std::pair<int, int>>& true_predicted) {
    ConfusionMatrix m;
    for (const auto& [truth, predicted] : true_predicted) {
        if (truth < 0 || truth >= kCategoryCount || predicted < 0 || predicted >= kCategoryCount) {
            throw InvalidInput("confusion label out of range 0..11");
        }
        ++m.counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
    }
    return m;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
    std::stable_sort(detections.begin(), detections.end(), detection_before);
    std::vector<Detection> kept;
    for (const Detection& d : detections) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.category == d.category && iou(k.box, d.box) > iou_threshold;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::vector<DetectionRecord> parse_detections(std::istream& in) {
    std::vector<DetectionRecord> out;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::vector<std::string> tokens;
        std::istringstream fields(line);
        for (std::string t; fields >> t;) tokens.push_back(t);
        if (tokens.size() < 7) throw FormatError("detection needs 7 fields", line_no);
        const std::size_t n = tokens.size();
        DetectionRecord rec;
        for (std::size_t i = 0; i + 6 < n; ++i) rec.image_ref += (i > 0 ? " " : "") + tokens[i];
        try {
            rec.detection.box = {std::stoi(tokens[n - 6]), std::stoi(tokens[n - 5]), std::stoi(tokens[n - 4]),
                                 std::stoi(tokens[n - 3])};
            rec.detection.confidence = std::stod(tokens[n - 1]);
        } catch (const std::exception&) {
            throw FormatError("bad detection numbers", line_no);
        }
        if (!rec.detection.box.valid()) throw FormatError("detection box has non-positive area", line_no);
        if (!(rec.detection.confidence >= 0.0 && rec.detection.confidence <= 1.0)) {
            throw FormatError("detection confidence outside [0,1]", line_no);
        }
        try {
            rec.detection.category = category_id(tokens[n - 2]);
        } catch (const InvalidInput& e) {
            throw FormatError(e.what(), line_no);
        }
        if (rec.detection.category == kBackgroundId) throw FormatError("detections cannot be background", line_no);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<DetectionRecord> load_detections(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open detection file " + path.string());
    return parse_detections(in);
}

void write_detections(std::ostream& out, const std::vector<DetectionRecord>& records) {
    for (const DetectionRecord& r : records) {
        out << r.image_ref << ' ' << r.detection.box << ' ' << category_name(r.detection.category) << ' '
            << std::setprecision(17) << r.detection.confidence << '\n';
    }
}

std::vector<ImageEvaluation> pair_by_image(const std::vector<DetectionRecord>& detections,
                                           const std::vector<Annotation>& annotations) {
    std::map<std::string, std::size_t> index;
    std::vector<ImageEvaluation> out;
    auto slot = [&](const std::string& ref) -> ImageEvaluation& {
        auto [it, inserted] = index.emplace(ref, out.size());
        if (inserted) out.emplace_back();
        return out[it->second];
    };
    for (const Annotation& a : annotations) slot(a.image_ref).ground_truth.push_back(a);
    for (const DetectionRecord& d : detections) slot(d.image_ref).detections.push_back(d.detection);
    return out;
}

}  // namespace funcarea
