#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "funcarea/dataset.hpp"
#include "funcarea/errors.hpp"
#include "unit/support.hpp"

using namespace funcarea;

namespace {

std::array<double, 3> mean_color(const Image& img, const BoundingBox& box) {
    std::array<double, 3> m{};
    for (int y = box.y_min; y < box.y_max; ++y)
        for (int x = box.x_min; x < box.x_max; ++x)
            for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(c)] += img.at(x, y, c);
    for (double& v : m) v /= static_cast<double>(box.area());
    return m;
}

}  // namespace

TEST_CASE("ontology") {
    const auto& cats = ontology();
    REQUIRE(cats.size() == 12);
    std::set<std::string> names;
    for (std::size_t i = 0; i < cats.size(); ++i) {
        CHECK(cats[i].id == static_cast<int>(i));
        names.insert(cats[i].name);
    }
    CHECK(names.size() == 12);
    CHECK(names.count("to-sit-to-place") == 1);
    CHECK(category_name(kBackgroundId) == "background");
    CHECK(category_id("turn-on-off-water") == 3);
    CHECK_THROWS_AS(category_id("to-cut"), InvalidInput);
    std::set<std::array<float, 3>> colors;
    for (const auto& c : cats) colors.insert(c.display_color);
    CHECK(colors.size() == 12);
}

TEST_CASE("annotation io") {
    const std::vector<Annotation> anns{
        {"scene 0.ppm", {1, 2, 10, 12}, 3},
        {"dir/b.ppm", {0, 0, 5, 5}, 10},
    };
    std::stringstream ss;
    write_annotations(ss, anns);
    CHECK(parse_annotations(ss) == anns);

    std::istringstream with_comments("# header\n\n  a.ppm 0 0 4 4 hook-grasp-to-move\n");
    const auto parsed = parse_annotations(with_comments);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].category == 7);

    std::istringstream bad_name("a.ppm 0 0 4 4 to-fly\n");
    CHECK_THROWS_AS(parse_annotations(bad_name), FormatError);
    std::istringstream bg("a.ppm 0 0 4 4 background\n");
    CHECK_THROWS_AS(parse_annotations(bg), FormatError);
    std::istringstream bad_box("a.ppm 4 0 4 4 hook-grasp-to-move\n");
    CHECK_THROWS_AS(parse_annotations(bad_box), FormatError);
    std::istringstream short_line("# ok\na.ppm 0 0 4 hook-grasp-to-move\n");
    try {
        parse_annotations(short_line);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 2);
    }
}

TEST_CASE("background sampling") {
    Rng rng(5);
    const auto boxes = random_boxes(64, 48, 500, rng);
    CHECK(boxes.size() == 500);
    for (const BoundingBox& b : boxes) {
        CHECK(b.width() >= 8);
        CHECK(b.height() >= 8);
        CHECK(intersection(b, {0, 0, 64, 48}) == b);
    }

    Rng a(1);
    CHECK(sample_background(64, 64, {}, 100, 0.5, a).size() == 100);

    // A candidate equal to the annotation is rejected.
    CHECK(filter_background({{0, 0, 64, 64}}, {{0, 0, 64, 64}}, 0.5).empty());

    // Re-filter the same candidates with an independent IOU computation.
    const BoundingBox gt{10, 10, 30, 26};
    Rng r1(77), r2(77);
    const auto kept = sample_background(40, 32, {gt}, 200, 0.5, r1);
    const auto candidates = random_boxes(40, 32, 200, r2);
    std::vector<BoundingBox> oracle;
    for (const BoundingBox& c : candidates) {
        const long long iw = std::max(0, std::min(c.x_max, gt.x_max) - std::max(c.x_min, gt.x_min));
        const long long ih = std::max(0, std::min(c.y_max, gt.y_max) - std::max(c.y_min, gt.y_min));
        const long long inter = iw * ih;
        if (2 * inter < c.area() + gt.area() - inter) oracle.push_back(c);
    }
    CHECK(kept == oracle);
    CHECK(kept.size() < 200);

    Rng z(1);
    CHECK_THROWS_AS(sample_background(10, 10, {}, 0, 0.5, z), InvalidInput);
    CHECK_THROWS_AS(sample_background(10, 10, {}, 5, 0.0, z), InvalidInput);
}

TEST_CASE("split dataset") {
    std::vector<std::string> ids;
    for (int i = 0; i < 1000; ++i) ids.push_back("img" + std::to_string(i));
    const DatasetSplit s = split_dataset(ids, 3);
    CHECK(s.test.size() == 100);
    CHECK(s.validation.size() == 18);
    CHECK(s.train.size() == 882);
    std::set<std::string> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    all.insert(s.validation.begin(), s.validation.end());
    CHECK(all.size() == 1000);

    CHECK(split_dataset(ids, 3).test == s.test);
    std::set<std::vector<std::string>> tests;
    for (std::uint64_t seed = 10; seed < 15; ++seed) tests.insert(split_dataset(ids, seed).test);
    CHECK(tests.size() == 5);

    const DatasetSplit small = split_dataset({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"}, 1);
    CHECK(small.test.size() == 1);
    CHECK(small.validation.size() == 1);
    CHECK(small.train.size() == 8);
    CHECK_THROWS_AS(split_dataset({"a", "b"}, 1), InsufficientData);
}

TEST_CASE("synthetic generation") {
    SyntheticSceneSpec spec;
    spec.seed = 4;
    CHECK(generate_synthetic(spec, 0).images.empty());

    const SyntheticDataset data = generate_synthetic(spec, 30);
    REQUIRE(data.images.size() == 30);
    CHECK(data.image_refs[3] == "scene_0003.ppm");
    for (const Annotation& a : data.annotations) {
        CHECK(a.category >= 0);
        CHECK(a.category < kEndCategoryCount);
        CHECK(intersection(a.box, {0, 0, spec.width, spec.height}) == a.box);
    }
    const auto grouped = group_by_image(data.image_refs, data.annotations);
    for (const auto& g : grouped) {
        CHECK(g.size() >= static_cast<std::size_t>(spec.min_objects));
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = i + 1; j < g.size(); ++j) CHECK(intersection_area(g[i].box, g[j].box) == 0);
    }

    const SyntheticDataset again = generate_synthetic(spec, 30);
    CHECK(again.images == data.images);
    CHECK(again.annotations == data.annotations);

    SyntheticSceneSpec dup = spec;
    dup.signatures[1] = dup.signatures[0];
    CHECK_THROWS_AS(generate_synthetic(dup, 1), InvalidInput);
}

TEST_CASE("synthetic categories are separable by mean color") {
    SyntheticSceneSpec spec;
    spec.seed = 21;
    const SyntheticDataset data = generate_synthetic(spec, 400);
    std::vector<std::pair<std::array<double, 3>, int>> samples;
    const auto grouped = group_by_image(data.image_refs, data.annotations);
    for (std::size_t i = 0; i < data.images.size() && samples.size() < 1000; ++i)
        for (const Annotation& a : grouped[i]) samples.emplace_back(mean_color(data.images[i], a.box), a.category);
    REQUIRE(samples.size() >= 1000);
    // Centroids from the first half, accuracy on 500 held-out patches.
    std::array<std::array<double, 3>, kEndCategoryCount> centroid{};
    std::array<int, kEndCategoryCount> count{};
    for (std::size_t i = 0; i < 500; ++i) {
        const auto& [m, c] = samples[i];
        for (int k = 0; k < 3; ++k) centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] += m[static_cast<std::size_t>(k)];
        ++count[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < kEndCategoryCount; ++c)
        for (double& v : centroid[static_cast<std::size_t>(c)]) v /= std::max(1, count[static_cast<std::size_t>(c)]);
    int correct = 0;
    for (std::size_t i = 500; i < 1000; ++i) {
        const auto& [m, c] = samples[i];
        int best = 0;
        double best_d = 1e9;
        for (int k = 0; k < kEndCategoryCount; ++k) {
            double d = 0;
            for (int ch = 0; ch < 3; ++ch) {
                const double diff = m[static_cast<std::size_t>(ch)] - centroid[static_cast<std::size_t>(k)][static_cast<std::size_t>(ch)];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        correct += best == c ? 1 : 0;
    }
    CHECK(correct > 450);
}

TEST_CASE("dataset save and load") {
    const auto dir = testing::temp_dir("dataset");
    SyntheticSceneSpec spec;
    const SyntheticDataset data = generate_synthetic(spec, 3);
    save_dataset(dir, data);
    const SyntheticDataset back = load_dataset(dir / "annotations.txt");
    CHECK(back.annotations == data.annotations);
    REQUIRE(back.images.size() == data.images.size());
    // 8-bit storage: values survive to within half a quantization step.
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        REQUIRE(back.images[i].data().size() == data.images[i].data().size());
        double worst = 0.0;
        for (std::size_t k = 0; k < data.images[i].data().size(); ++k)
            worst = std::max(worst, static_cast<double>(std::abs(back.images[i].data()[k] - data.images[i].data()[k])));
        CHECK(worst <= 0.5 / 255.0 + 1e-6);
    }
    CHECK(load_annotations(dir / "annotations.txt") == data.annotations);
}

TEST_CASE("training patches") {
    SyntheticSceneSpec spec;
    spec.seed = 2;
    const SyntheticDataset data = generate_synthetic(spec, 4);
    const auto grouped = group_by_image(data.image_refs, data.annotations);

    PatchSamplingOptions opt;
    opt.backgrounds_per_image = 0;
    const PatchSet only = extract_training_patches(data, {1}, opt);
    REQUIRE(only.size() == grouped[1].size());
    for (std::size_t i = 0; i < only.size(); ++i) {
        CHECK(only[i].label == grouped[1][i].category);
        CHECK(only[i].patch.width() == 20);
        CHECK(only[i].patch == resize_bilinear(extract_patch(data.images[1], grouped[1][i].box), 20, 20));
    }

    opt.backgrounds_per_image = 50;
    const PatchSet with_bg = extract_training_patches(data, {0, 1, 2, 3}, opt);
    std::size_t bg = 0;
    for (const LabeledPatch& p : with_bg) {
        if (p.label != kBackgroundId) continue;
        ++bg;
        for (const Annotation& a : grouped[p.image_index]) CHECK(iou(p.box, a.box) < 0.5);
    }
    CHECK(bg > 0);
    CHECK(extract_training_patches(data, {0, 1, 2, 3}, opt).size() == with_bg.size());
}
