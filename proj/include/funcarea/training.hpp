#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "funcarea/dataset.hpp"
#include "funcarea/neuralnet.hpp"
#include "funcarea/optimizer.hpp"
#include "funcarea/pipeline.hpp"

namespace funcarea {

struct TrainConfig {
    std::size_t batch_size = 64;
    Schedule schedule;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    int rounds = 3;
    NetworkSpec net = default_network();
    /// Worker threads for batch gradients; 0 picks hardware concurrency.
    /// Results do not depend on this value.
    unsigned threads = 0;

    void validate() const;
};

/// Key/value text (`key value` per line, '#' comments). Keys: batch_size,
/// momentum, lr_body, lr_head, drop_epochs (comma list), drop_factor,
/// stop_epoch, rounds, seed, threads, net (spec path, relative to the file).
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;  // mean training loss over the epoch
    double top1_error = 0.0;
    double top5_error = 0.0;
    LearningRates rates;
};

struct RoundReport {
    int round = 1;
    int epochs_run = 0;
    double initial_loss = 0.0;  // mean training loss before the first update
    double final_loss = 0.0;
    double top1_error = 0.0;
    double top5_error = 0.0;
    std::size_t training_set_size = 0;
    std::vector<EpochLog> epochs;
};

struct TopKErrors {
    double top1 = 0.0;
    double top5 = 0.0;
};

/// Classification error rates; zeros for an empty set.
TopKErrors classification_errors(const Checkpoint& model, const PatchSet& patches);
double mean_loss(const Checkpoint& model, const PatchSet& patches);

/// Replaces the final fully connected layer with a fresh seeded layer of
/// `class_count` outputs; every other parameter is kept bit-exactly.
Checkpoint reinit_head(const Checkpoint& checkpoint, int class_count, std::uint64_t seed);

struct TrainResult {
    Checkpoint checkpoint;
    RoundReport report;
};

/// Mean gradient of cross-entropy over the listed samples, reduced in a fixed
/// chunk order so the result is independent of the thread count.
Gradients batch_gradient(const Checkpoint& model, const PatchSet& patches, std::span<const std::size_t> indices,
                         unsigned threads, double* loss_sum = nullptr);

/// Shuffled mini-batch momentum SGD following the schedule until it halts.
/// Starts from `warm_start` when given, else from seeded random init.
TrainResult train(const PatchSet& patches, const PatchSet& validation, const TrainConfig& config,
                  const std::optional<Checkpoint>& warm_start = std::nullopt, int round = 1);

/// A mined sample: false positives carry the background label, false
/// negatives their true category.
struct HardExample {
    std::size_t image_index = 0;
    BoundingBox box;
    int label = 0;
    bool operator==(const HardExample&) const = default;
};

using HardExampleSet = std::vector<HardExample>;

/// Detections for image `index`.
using DetectorFn = std::function<std::vector<Detection>(std::size_t index, const Image& img)>;

/// Disagreements between detections and ground truth under the evaluation
/// matching rule, for one image.
HardExampleSet hard_examples_for_image(std::size_t image_index, const std::vector<Detection>& detections,
                                       const std::vector<Annotation>& ground_truth, double iou_threshold = 0.5);

HardExampleSet mine_hard_examples(const SyntheticDataset& data, const std::vector<std::size_t>& image_indices,
                                  const DetectorFn& detector, double iou_threshold = 0.5);

/// Proposals per image, computed once and reused across rounds.
using ProposalCache = std::vector<std::optional<ProposalSet>>;

/// CNN detector over a dataset, optionally memoizing proposals per image.
DetectorFn make_detector(const Checkpoint& model, const DetectorConfig& config, ProposalCache* cache = nullptr);

PatchSet hard_example_patches(const SyntheticDataset& data, const HardExampleSet& hard, int width, int height);

struct RoundsConfig {
    TrainConfig train;
    PatchSamplingOptions sampling;
    DetectorConfig detector;
};

struct RoundsResult {
    std::vector<Checkpoint> checkpoints;  // one per round
    std::vector<RoundReport> reports;
    std::vector<std::size_t> hard_examples;  // mined after each round but the last
};

using RoundCallback = std::function<void(int round, const Checkpoint&, const RoundReport&)>;

/// Round 1 trains on annotations plus sampled backgrounds; each later round
/// appends the previous round's hard examples and continues from the previous
/// checkpoint with the schedule restarted.
RoundsResult train_rounds(const SyntheticDataset& data, const std::vector<std::size_t>& train_images,
                          const std::vector<std::size_t>& validation_images, const RoundsConfig& config,
                          ProposalCache* cache = nullptr, const RoundCallback& on_round = {});

/// `epoch,loss,top1,top5,lr_body,lr_head` rows.
void write_epoch_csv(const std::filesystem::path& path, const RoundReport& report);

}  // namespace funcarea
