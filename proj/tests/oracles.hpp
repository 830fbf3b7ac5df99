#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// suites. They avoid the library's geometry helpers on purpose.

#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

#include "funcarea/evaluation.hpp"
#include "funcarea/random.hpp"

namespace oracle {

using funcarea::Annotation;
using funcarea::BoundingBox;
using funcarea::Detection;

/// Overlap as an exact fraction inter/uni, counted cell by cell.
struct Overlap {
    long long inter = 0;
    long long uni = 0;
};

inline Overlap grid_overlap(const BoundingBox& a, const BoundingBox& b) {
    Overlap o;
    const int x0 = std::min(a.x_min, b.x_min), x1 = std::max(a.x_max, b.x_max);
    const int y0 = std::min(a.y_min, b.y_min), y1 = std::max(a.y_max, b.y_max);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const bool ia = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
            const bool ib = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
            o.inter += (ia && ib) ? 1 : 0;
            o.uni += (ia || ib) ? 1 : 0;
        }
    return o;
}

// inter/uni > t for t given as num/den.
inline bool above(const Overlap& o, long long num, long long den) { return o.inter * den > num * o.uni; }

// p/q > r/s
inline bool greater(const Overlap& p, const Overlap& r) { return p.inter * r.uni > r.inter * p.uni; }

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
    std::vector<std::size_t> tp_indices;  // into the input detection list
    bool operator==(const Counts& o) const { return tp == o.tp && fp == o.fp && fn == o.fn; }
};

/// Greedy matcher over detection indices; IOU threshold num/den.
inline Counts match(const std::vector<Detection>& dets, const std::vector<Annotation>& gts, long long num = 1,
                    long long den = 2) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const Detection& a = dets[i];
        const Detection& b = dets[j];
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        const std::array<int, 5> ka{a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max, a.category};
        const std::array<int, 5> kb{b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max, b.category};
        if (ka != kb) return ka < kb;
        return i < j;
    });
    std::vector<bool> used(gts.size(), false);
    Counts c;
    for (std::size_t i : order) {
        int best = -1;
        Overlap best_o;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].category != dets[i].category) continue;
            const Overlap o = grid_overlap(dets[i].box, gts[g].box);
            if (!above(o, num, den)) continue;
            if (best < 0 || greater(o, best_o)) {
                best = static_cast<int>(g);
                best_o = o;
            }
        }
        if (best >= 0) {
            used[static_cast<std::size_t>(best)] = true;
            ++c.tp;
            c.tp_indices.push_back(i);
        } else {
            ++c.fp;
        }
    }
    c.fn = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
    return c;
}

/// Greedy same-class suppression, IOU threshold num/den.
inline std::vector<Detection> nms(std::vector<Detection> dets, long long num = 3, long long den = 10) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        const std::array<int, 5> ka{a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max, a.category};
        const std::array<int, 5> kb{b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max, b.category};
        return ka < kb;
    });
    std::vector<bool> dead(dets.size(), false);
    std::vector<Detection> kept;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dead[i]) continue;
        kept.push_back(dets[i]);
        for (std::size_t j = i + 1; j < dets.size(); ++j)
            if (dets[j].category == dets[i].category && above(grid_overlap(dets[i].box, dets[j].box), num, den))
                dead[j] = true;
    }
    return kept;
}

inline BoundingBox random_box(funcarea::Rng& rng, int extent, int max_side) {
    const int w = static_cast<int>(rng.uniform_int(1, max_side));
    const int h = static_cast<int>(rng.uniform_int(1, max_side));
    const int x = static_cast<int>(rng.uniform_int(0, extent - w));
    const int y = static_cast<int>(rng.uniform_int(0, extent - h));
    return {x, y, x + w, y + h};
}

/// Small random image fixture: a few GTs and jittered/duplicated detections
/// with coarse confidences so ties occur.
inline funcarea::ImageEvaluation random_fixture(funcarea::Rng& rng, int categories = 3) {
    funcarea::ImageEvaluation img;
    const int gts = static_cast<int>(rng.uniform_int(0, 4));
    for (int g = 0; g < gts; ++g)
        img.ground_truth.push_back({"x", random_box(rng, 24, 12), static_cast<int>(rng.uniform_int(0, categories - 1))});
    const int dets = static_cast<int>(rng.uniform_int(0, 6));
    for (int d = 0; d < dets; ++d) {
        Detection det;
        if (!img.ground_truth.empty() && rng.uniform() < 0.7) {
            const auto& g = img.ground_truth[static_cast<std::size_t>(rng.uniform_int(0, gts - 1))];
            const int dx = static_cast<int>(rng.uniform_int(-2, 2)), dy = static_cast<int>(rng.uniform_int(-2, 2));
            det.box = {g.box.x_min + dx, g.box.y_min + dy, std::max(g.box.x_min + dx + 1, g.box.x_max + dx),
                       std::max(g.box.y_min + dy + 1, g.box.y_max + dy)};
            det.category = rng.uniform() < 0.8 ? g.category : static_cast<int>(rng.uniform_int(0, categories - 1));
        } else {
            det.box = random_box(rng, 24, 12);
            det.category = static_cast<int>(rng.uniform_int(0, categories - 1));
        }
        det.confidence = static_cast<double>(rng.uniform_int(0, 10)) / 10.0;
        img.detections.push_back(det);
    }
    return img;
}

}  // namespace oracle
