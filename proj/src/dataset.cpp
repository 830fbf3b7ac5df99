#include "funcarea/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "funcarea/errors.hpp"

namespace funcarea {

const std::vector<OntologyCategory>& ontology() {
    static const std::vector<OntologyCategory> categories = [] {
        const std::vector<std::string> part{"small part of furniture/appliance/wall"};
        const std::vector<std::string> objects{"objects (vessels and tools)"};
        auto chain = [](std::vector<std::string> base, const char* group) {
            base.emplace_back(group);
            return base;
        };
        std::vector<OntologyCategory> c{
            {0, "spherical-grasp-to-open", chain(part, "to open"), {0.12F, 0.35F, 0.95F}},
            {1, "wrap-grasp-to-open", chain(part, "to open"), {0.10F, 0.80F, 0.20F}},
            {2, "turn-on-off-fire", chain(part, "to turn on/off"), {0.95F, 0.15F, 0.10F}},
            {3, "turn-on-off-water", chain(part, "to turn on/off"), {0.20F, 0.85F, 0.95F}},
            {4, "turn-on-off-electricity", chain(part, "to turn on/off"), {0.98F, 0.90F, 0.10F}},
            {5, "two-hands-raise-and-move", chain(objects, "to move"), {0.05F, 0.05F, 0.05F}},
            {6, "cylindrical-grasp-to-move", chain(objects, "to move"), {0.95F, 0.55F, 0.05F}},
            {7, "hook-grasp-to-move", chain(objects, "to move"), {0.60F, 0.20F, 0.80F}},
            {8, "pinch-grasp-to-move", chain(objects, "to move"), {0.95F, 0.40F, 0.70F}},
            {9, "manipulate-elongated-tools", chain(objects, "elongated tools"), {0.55F, 0.35F, 0.15F}},
            {10, "to-sit-to-place", {"furniture"}, {0.50F, 0.50F, 0.50F}},
            {11, "background", {}, {1.00F, 1.00F, 1.00F}},
        };
        return c;
    }();
    return categories;
}

int category_id(const std::string& name) {
    for (const OntologyCategory& c : ontology()) {
        if (c.name == name) return c.id;
    }
    throw InvalidInput("unknown category '" + name + "'");
}

const std::string& category_name(int id) {
    if (id < 0 || id >= kCategoryCount) throw InvalidInput("category id " + std::to_string(id) + " out of range");
    return ontology()[static_cast<std::size_t>(id)].name;
}

std::vector<Annotation> parse_annotations(std::istream& in) {
    std::vector<Annotation> out;
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
        if (tokens.size() < 6) throw FormatError("annotation needs 6 fields", line_no);
        const std::size_t n = tokens.size();
        Annotation a;
        for (std::size_t i = 0; i + 5 < n; ++i) a.image_ref += (i > 0 ? " " : "") + tokens[i];
        try {
            std::array<int, 4> coords{};
            for (std::size_t i = 0; i < 4; ++i) {
                std::size_t used = 0;
                coords[i] = std::stoi(tokens[n - 5 + i], &used);
                if (used != tokens[n - 5 + i].size()) throw std::invalid_argument("coordinate");
            }
            a.box = {coords[0], coords[1], coords[2], coords[3]};
        } catch (const std::exception&) {
            throw FormatError("bad annotation coordinates", line_no);
        }
        if (!a.box.valid()) throw FormatError("annotation box has non-positive area", line_no);
        try {
            a.category = category_id(tokens[n - 1]);
        } catch (const InvalidInput& e) {
            throw FormatError(e.what(), line_no);
        }
        if (a.category == kBackgroundId) throw FormatError("annotations must use end categories", line_no);
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open annotation file " + path.string());
    return parse_annotations(in);
}

void write_annotations(std::ostream& out, const std::vector<Annotation>& annotations) {
    for (const Annotation& a : annotations) {
        out << a.image_ref << ' ' << a.box << ' ' << category_name(a.category) << '\n';
    }
}

void save_annotations(const std::filesystem::path& path, const std::vector<Annotation>& annotations) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write annotation file " + path.string());
    out << "# image_path x_min y_min x_max y_max category_name\n";
    write_annotations(out, annotations);
}

std::vector<std::vector<Annotation>> group_by_image(const std::vector<std::string>& refs,
                                                    const std::vector<Annotation>& annotations) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < refs.size(); ++i) index.emplace(refs[i], i);
    std::vector<std::vector<Annotation>> out(refs.size());
    for (const Annotation& a : annotations) {
        const auto it = index.find(a.image_ref);
        if (it != index.end()) out[it->second].push_back(a);
    }
    return out;
}

std::vector<BoundingBox> random_boxes(int width, int height, std::size_t n, Rng& rng) {
    std::vector<BoundingBox> out;
    out.reserve(n);
    auto side = [&](int limit) {
        const double lo = std::min(8.0, static_cast<double>(limit));
        const double hi = std::min(static_cast<double>(limit), 256.0);
        const double s = std::exp(rng.uniform(std::log(lo), std::log(hi)));
        return std::clamp(static_cast<int>(std::lround(s)), static_cast<int>(lo), static_cast<int>(hi));
    };
    for (std::size_t i = 0; i < n; ++i) {
        const int w = side(width);
        const int h = side(height);
        const int x = static_cast<int>(rng.uniform_int(0, width - w));
        const int y = static_cast<int>(rng.uniform_int(0, height - h));
        out.push_back({x, y, x + w, y + h});
    }
    return out;
}

std::vector<BoundingBox> filter_background(const std::vector<BoundingBox>& candidates,
                                           const std::vector<BoundingBox>& annotated, double threshold) {
    std::vector<BoundingBox> kept;
    for (const BoundingBox& c : candidates) {
        const bool clear = std::all_of(annotated.begin(), annotated.end(),
                                       [&](const BoundingBox& a) { return iou(c, a) < threshold; });
        if (clear) kept.push_back(c);
    }
    return kept;
}

std::vector<BoundingBox> sample_background(int width, int height, const std::vector<BoundingBox>& annotated,
                                           std::size_t n, double threshold, Rng& rng) {
    if (n < 1) throw InvalidInput("background sample count must be at least 1");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidInput("background IOU threshold must lie in (0,1]");
    return filter_background(random_boxes(width, height, n, rng), annotated, threshold);
}

DatasetSplit split_dataset(std::vector<std::string> image_ids, std::uint64_t seed) {
    const std::size_t n = image_ids.size();
    if (n < 10) throw InsufficientData("splitting needs at least 10 images, got " + std::to_string(n));
    Rng rng(seed);
    rng.shuffle(image_ids.begin(), image_ids.end());
    const std::size_t test = n / 10;
    const std::size_t rest = n - test;
    const std::size_t validation = std::max<std::size_t>(1, (rest * 2 + 99) / 100);
    DatasetSplit split;
    split.seed = seed;
    split.test.assign(image_ids.begin(), image_ids.begin() + static_cast<std::ptrdiff_t>(test));
    split.validation.assign(image_ids.begin() + static_cast<std::ptrdiff_t>(test),
                            image_ids.begin() + static_cast<std::ptrdiff_t>(test + validation));
    split.train.assign(image_ids.begin() + static_cast<std::ptrdiff_t>(test + validation), image_ids.end());
    return split;
}

std::array<CategorySignature, kEndCategoryCount> SyntheticSceneSpec::default_signatures() {
    std::array<CategorySignature, kEndCategoryCount> sig{};
    constexpr std::array<TextureKind, 4> textures{TextureKind::Solid, TextureKind::HorizontalStripes,
                                                  TextureKind::VerticalStripes, TextureKind::Checker};
    for (int i = 0; i < kEndCategoryCount; ++i) {
        // Saturated hues spaced evenly around the wheel.
        const double hue = static_cast<double>(i) / kEndCategoryCount * 6.0;
        const double f = hue - std::floor(hue);
        const double v = 0.95;
        const double s = 0.9;
        const double p = v * (1 - s);
        const double q = v * (1 - s * f);
        const double t = v * (1 - s * (1 - f));
        std::array<double, 3> rgb{};
        switch (static_cast<int>(hue) % 6) {
            case 0: rgb = {v, t, p}; break;
            case 1: rgb = {q, v, p}; break;
            case 2: rgb = {p, v, t}; break;
            case 3: rgb = {p, q, v}; break;
            case 4: rgb = {t, p, v}; break;
            default: rgb = {v, p, q}; break;
        }
        auto& out = sig[static_cast<std::size_t>(i)];
        out.color = {static_cast<float>(rgb[0]), static_cast<float>(rgb[1]), static_cast<float>(rgb[2])};
        out.shape = i % 2 == 0 ? ShapeKind::Rectangle : ShapeKind::Ellipse;
        out.texture = textures[static_cast<std::size_t>(i) % textures.size()];
    }
    return sig;
}

void SyntheticSceneSpec::validate() const {
    if (width < 16 || height < 16) throw InvalidInput("synthetic canvas must be at least 16x16");
    if (min_objects < 0 || max_objects < min_objects) throw InvalidInput("invalid object count range");
    if (max_distractors < 0) throw InvalidInput("distractor count must be non-negative");
    if (min_object_size < 4 || max_object_size < min_object_size || max_object_size > std::min(width, height)) {
        throw InvalidInput("invalid object size range");
    }
    if (noise < 0.0) throw InvalidInput("noise must be non-negative");
    for (std::size_t i = 0; i < signatures.size(); ++i) {
        for (std::size_t j = i + 1; j < signatures.size(); ++j) {
            if (signatures[i] == signatures[j]) throw InvalidInput("category signatures must be pairwise distinct");
        }
    }
}

namespace {

bool inside_shape(ShapeKind shape, const BoundingBox& box, int x, int y) {
    if (shape == ShapeKind::Rectangle) return true;
    const double cx = 0.5 * (box.x_min + box.x_max);
    const double cy = 0.5 * (box.y_min + box.y_max);
    const double rx = 0.5 * box.width();
    const double ry = 0.5 * box.height();
    const double dx = (x + 0.5 - cx) / rx;
    const double dy = (y + 0.5 - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
}

double texture_shade(TextureKind texture, int lx, int ly) {
    switch (texture) {
        case TextureKind::Solid: return 1.0;
        case TextureKind::HorizontalStripes: return (ly / 2) % 2 == 0 ? 1.0 : 0.55;
        case TextureKind::VerticalStripes: return (lx / 2) % 2 == 0 ? 1.0 : 0.55;
        case TextureKind::Checker: return ((lx / 2) + (ly / 2)) % 2 == 0 ? 1.0 : 0.55;
    }
    return 1.0;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSceneSpec& spec, std::size_t count) {
    spec.validate();
    SyntheticDataset data;
    for (std::size_t index = 0; index < count; ++index) {
        Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index)}));
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04zu.ppm", index);
        const std::string ref = name;

        // Muted gradient background.
        std::array<double, 3> c0{};
        std::array<double, 3> c1{};
        const double base0 = rng.uniform(0.35, 0.6);
        const double base1 = rng.uniform(0.35, 0.6);
        for (int c = 0; c < 3; ++c) {
            c0[static_cast<std::size_t>(c)] = base0 + rng.uniform(-0.04, 0.04);
            c1[static_cast<std::size_t>(c)] = base1 + rng.uniform(-0.04, 0.04);
        }
        const bool horizontal = rng.uniform() < 0.5;
        Image img(spec.width, spec.height, 3);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const double t = horizontal ? static_cast<double>(x) / (spec.width - 1)
                                            : static_cast<double>(y) / (spec.height - 1);
                for (int c = 0; c < 3; ++c) {
                    const auto k = static_cast<std::size_t>(c);
                    img.at(x, y, c) = clamp01((1 - t) * c0[k] + t * c1[k]);
                }
            }
        }

        auto random_box = [&]() {
            const int w = static_cast<int>(rng.uniform_int(spec.min_object_size, spec.max_object_size));
            const int h = static_cast<int>(rng.uniform_int(spec.min_object_size, spec.max_object_size));
            const int x = static_cast<int>(rng.uniform_int(0, spec.width - w));
            const int y = static_cast<int>(rng.uniform_int(0, spec.height - h));
            return BoundingBox{x, y, x + w, y + h};
        };

        // Low-saturation distractor blobs.
        const int distractors = static_cast<int>(rng.uniform_int(0, spec.max_distractors));
        for (int d = 0; d < distractors; ++d) {
            const BoundingBox box = random_box();
            const double gray = rng.uniform(0.2, 0.8);
            const ShapeKind shape = rng.uniform() < 0.5 ? ShapeKind::Rectangle : ShapeKind::Ellipse;
            for (int y = box.y_min; y < box.y_max; ++y) {
                for (int x = box.x_min; x < box.x_max; ++x) {
                    if (!inside_shape(shape, box, x, y)) continue;
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp01(gray + 0.03 * (c - 1));
                }
            }
        }

        // Category objects, non-overlapping with a one pixel gap.
        const int wanted = static_cast<int>(rng.uniform_int(spec.min_objects, spec.max_objects));
        std::vector<BoundingBox> placed;
        for (int attempt = 0; attempt < 200 && static_cast<int>(placed.size()) < wanted; ++attempt) {
            const BoundingBox box = random_box();
            const BoundingBox grown{box.x_min - 1, box.y_min - 1, box.x_max + 1, box.y_max + 1};
            const bool clear = std::none_of(placed.begin(), placed.end(),
                                            [&](const BoundingBox& p) { return intersection_area(grown, p) > 0; });
            if (!clear) continue;
            const int category = static_cast<int>(rng.uniform_int(0, kEndCategoryCount - 1));
            const CategorySignature& sig = spec.signatures[static_cast<std::size_t>(category)];
            BoundingBox tight{spec.width, spec.height, 0, 0};
            for (int y = box.y_min; y < box.y_max; ++y) {
                for (int x = box.x_min; x < box.x_max; ++x) {
                    if (!inside_shape(sig.shape, box, x, y)) continue;
                    const double shade = texture_shade(sig.texture, x - box.x_min, y - box.y_min);
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp01(sig.color[static_cast<std::size_t>(c)] * shade);
                    tight = {std::min(tight.x_min, x), std::min(tight.y_min, y), std::max(tight.x_max, x + 1),
                             std::max(tight.y_max, y + 1)};
                }
            }
            placed.push_back(box);
            data.annotations.push_back({ref, tight, category});
        }

        if (spec.noise > 0.0) {
            for (float& v : img.data()) v = clamp01(v + spec.noise * rng.normal());
        }
        data.image_refs.push_back(ref);
        data.images.push_back(std::move(img));
    }
    return data;
}

void save_dataset(const std::filesystem::path& dir, const SyntheticDataset& data) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < data.images.size(); ++i) write_pnm(dir / data.image_refs[i], data.images[i]);
    save_annotations(dir / "annotations.txt", data.annotations);
}

SyntheticDataset load_dataset(const std::filesystem::path& annotation_file) {
    SyntheticDataset data;
    data.annotations = load_annotations(annotation_file);
    const std::filesystem::path base = annotation_file.parent_path();
    for (const Annotation& a : data.annotations) {
        if (std::find(data.image_refs.begin(), data.image_refs.end(), a.image_ref) != data.image_refs.end()) continue;
        data.image_refs.push_back(a.image_ref);
        const std::filesystem::path p = std::filesystem::path(a.image_ref).is_absolute() ? std::filesystem::path(a.image_ref) : base / a.image_ref;
        data.images.push_back(read_pnm(p));
    }
    for (const Annotation& a : data.annotations) {
        const auto idx = static_cast<std::size_t>(
            std::find(data.image_refs.begin(), data.image_refs.end(), a.image_ref) - data.image_refs.begin());
        const BoundingBox clipped = intersection(a.box, data.images[idx].bounds());
        if (clipped != a.box) throw InvalidInput("annotation box outside image " + a.image_ref);
    }
    return data;
}

LabeledPatch make_patch(const Image& img, const BoundingBox& box, int label, std::size_t image_index, int width,
                        int height) {
    return {resize_bilinear(extract_patch(img, box), width, height), label, image_index, box};
}

PatchSet extract_training_patches(const SyntheticDataset& data, const std::vector<std::size_t>& image_indices,
                                  const PatchSamplingOptions& options) {
    const auto grouped = group_by_image(data.image_refs, data.annotations);
    PatchSet out;
    for (std::size_t index : image_indices) {
        const Image& img = data.images.at(index);
        std::vector<BoundingBox> boxes;
        for (const Annotation& a : grouped[index]) {
            out.push_back(make_patch(img, a.box, a.category, index, options.width, options.height));
            boxes.push_back(a.box);
        }
        if (options.backgrounds_per_image == 0) continue;
        Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(index)}));
        for (const BoundingBox& b : sample_background(img.width(), img.height(), boxes, options.backgrounds_per_image,
                                                      options.background_threshold, rng)) {
            out.push_back(make_patch(img, b, kBackgroundId, index, options.width, options.height));
        }
    }
    return out;
}

}  // namespace funcarea
