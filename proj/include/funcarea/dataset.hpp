#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "funcarea/imaging.hpp"
#include "funcarea/random.hpp"

namespace funcarea {

inline constexpr int kEndCategoryCount = 11;
inline constexpr int kCategoryCount = 12;
inline constexpr int kBackgroundId = 11;

struct OntologyCategory {
    int id = 0;
    std::string name;
    std::vector<std::string> parent_chain;
    std::array<float, 3> display_color{};
};

/// The eleven functional end categories followed by background (id 11).
const std::vector<OntologyCategory>& ontology();
/// Throws InvalidInput for unknown names.
int category_id(const std::string& name);
const std::string& category_name(int id);

struct Annotation {
    std::string image_ref;
    BoundingBox box;
    int category = 0;

    bool operator==(const Annotation&) const = default;
};

/// `image_path x_min y_min x_max y_max category_name` per line, '#' comments.
/// The image path may contain spaces; the last five fields are fixed.
std::vector<Annotation> parse_annotations(std::istream& in);
std::vector<Annotation> load_annotations(const std::filesystem::path& path);
void write_annotations(std::ostream& out, const std::vector<Annotation>& annotations);
void save_annotations(const std::filesystem::path& path, const std::vector<Annotation>& annotations);

/// Annotations grouped by image_ref, in first-appearance order of `refs`.
std::vector<std::vector<Annotation>> group_by_image(const std::vector<std::string>& refs,
                                                    const std::vector<Annotation>& annotations);

/// Random boxes with log-uniform side lengths in [8, min(side, 256)] and
/// uniform positions, fully inside a width x height image.
std::vector<BoundingBox> random_boxes(int width, int height, std::size_t n, Rng& rng);

/// Boxes whose IOU with every annotation box is below `threshold`.
std::vector<BoundingBox> filter_background(const std::vector<BoundingBox>& candidates,
                                           const std::vector<BoundingBox>& annotated, double threshold);

/// Draws n candidates and keeps the qualifying subset (no resampling).
std::vector<BoundingBox> sample_background(int width, int height, const std::vector<BoundingBox>& annotated,
                                           std::size_t n, double threshold, Rng& rng);

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::vector<std::string> validation;
    std::uint64_t seed = 0;
};

/// Seeded shuffle; floor(10%) test, then ceil(2%) (at least 1) of the
/// remainder for validation, the rest for training.
DatasetSplit split_dataset(std::vector<std::string> image_ids, std::uint64_t seed);

enum class ShapeKind { Rectangle, Ellipse };
enum class TextureKind { Solid, HorizontalStripes, VerticalStripes, Checker };

struct CategorySignature {
    std::array<float, 3> color{};
    ShapeKind shape = ShapeKind::Rectangle;
    TextureKind texture = TextureKind::Solid;
    bool operator==(const CategorySignature&) const = default;
};

struct SyntheticSceneSpec {
    int width = 64;
    int height = 64;
    int min_objects = 2;
    int max_objects = 4;
    int min_object_size = 12;
    int max_object_size = 24;
    int max_distractors = 2;
    double noise = 0.02;
    std::uint64_t seed = 1;
    std::array<CategorySignature, kEndCategoryCount> signatures = default_signatures();

    static std::array<CategorySignature, kEndCategoryCount> default_signatures();
    void validate() const;
};

struct SyntheticDataset {
    std::vector<std::string> image_refs;
    std::vector<Image> images;
    std::vector<Annotation> annotations;
};

/// Scenes of non-overlapping category objects plus muted distractor blobs on
/// a noisy gradient background. Image i uses the stream derive_seed(seed, {i}).
SyntheticDataset generate_synthetic(const SyntheticSceneSpec& spec, std::size_t count);

/// Writes `<dir>/scene_NNNN.ppm` files and `<dir>/annotations.txt`.
void save_dataset(const std::filesystem::path& dir, const SyntheticDataset& data);
/// Loads an annotation file and every image it references (paths relative to
/// the annotation file's directory).
SyntheticDataset load_dataset(const std::filesystem::path& annotation_file);

/// A training sample: a patch already resized to the network input.
struct LabeledPatch {
    Image patch;
    int label = 0;
    std::size_t image_index = 0;
    BoundingBox box;
};

using PatchSet = std::vector<LabeledPatch>;

LabeledPatch make_patch(const Image& img, const BoundingBox& box, int label, std::size_t image_index, int width,
                        int height);

struct PatchSamplingOptions {
    int width = 20;
    int height = 20;
    std::size_t backgrounds_per_image = 100;
    double background_threshold = 0.5;
    std::uint64_t seed = 1;
};

/// One patch per annotation plus sampled background patches (label 11) for
/// each of the listed images.
PatchSet extract_training_patches(const SyntheticDataset& data, const std::vector<std::size_t>& image_indices,
                                  const PatchSamplingOptions& options);

}  // namespace funcarea
