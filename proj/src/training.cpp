#include "funcarea/training.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "funcarea/errors.hpp"
#include "funcarea/random.hpp"

namespace funcarea {

void TrainConfig::validate() const {
    if (batch_size < 1) throw InvalidInput("batch_size must be at least 1");
    if (rounds < 1) throw InvalidInput("rounds must be at least 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0,1)");
    schedule.validate();
    net.validate();
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open train config " + path.string());
    TrainConfig config;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string key;
        std::string value;
        if (!(fields >> key)) continue;
        if (!(fields >> value)) throw FormatError("missing value for '" + key + "'", line_no);
        try {
            if (key == "batch_size") {
                config.batch_size = std::stoul(value);
            } else if (key == "momentum") {
                config.momentum = std::stod(value);
            } else if (key == "lr_body") {
                config.schedule.base_lr_body = std::stod(value);
            } else if (key == "lr_head") {
                config.schedule.base_lr_head = std::stod(value);
            } else if (key == "drop_epochs") {
                config.schedule.drop_epochs.clear();
                std::istringstream list(value);
                for (std::string item; std::getline(list, item, ',');) {
                    if (!item.empty()) config.schedule.drop_epochs.push_back(std::stoi(item));
                }
            } else if (key == "drop_factor") {
                config.schedule.drop_factor = std::stod(value);
            } else if (key == "stop_epoch") {
                config.schedule.stop_epoch = std::stoi(value);
            } else if (key == "rounds") {
                config.rounds = std::stoi(value);
            } else if (key == "seed") {
                config.seed = std::stoull(value);
            } else if (key == "threads") {
                config.threads = static_cast<unsigned>(std::stoul(value));
            } else if (key == "net") {
                const std::filesystem::path spec = value;
                config.net = load_network_spec(spec.is_absolute() ? spec : path.parent_path() / spec);
            } else {
                throw FormatError("unknown config key '" + key + "'", line_no);
            }
        } catch (const std::logic_error&) {
            throw FormatError("bad value '" + value + "' for '" + key + "'", line_no);
        }
    }
    config.validate();
    return config;
}

TopKErrors classification_errors(const Checkpoint& model, const PatchSet& patches) {
    if (patches.empty()) return {};
    std::size_t miss1 = 0;
    std::size_t miss5 = 0;
    for (const LabeledPatch& s : patches) {
        const ProbabilityVector p = predict(model.net, model.params, patch_to_input(model.net, s.patch));
        const double target = p.p[static_cast<std::size_t>(s.label)];
        // Classes ranked ahead of the target; equal scores order by index.
        std::size_t rank = 0;
        for (std::size_t k = 0; k < p.p.size(); ++k) {
            if (p.p[k] > target || (p.p[k] == target && k < static_cast<std::size_t>(s.label))) ++rank;
        }
        if (rank >= 1) ++miss1;
        if (rank >= 5) ++miss5;
    }
    const auto n = static_cast<double>(patches.size());
    return {static_cast<double>(miss1) / n, static_cast<double>(miss5) / n};
}

double mean_loss(const Checkpoint& model, const PatchSet& patches) {
    if (patches.empty()) return 0.0;
    double sum = 0.0;
    for (const LabeledPatch& s : patches) {
        sum += cross_entropy(predict(model.net, model.params, patch_to_input(model.net, s.patch)), s.label);
    }
    return sum / static_cast<double>(patches.size());
}

Checkpoint reinit_head(const Checkpoint& checkpoint, int class_count, std::uint64_t seed) {
    const int head = head_layer_index(checkpoint.net);
    if (head < 0) throw InvalidSpec("checkpoint has no fully connected head");
    Checkpoint out = checkpoint;
    auto& fc = std::get<FullyConnectedSpec>(out.net.layers[static_cast<std::size_t>(head)]);
    fc.out_dim = class_count;
    out.net.class_count = class_count;
    out.net.validate();
    init_layer(out.net, static_cast<std::size_t>(head), seed, out.params.layers[static_cast<std::size_t>(head)]);
    return out;
}

namespace {

constexpr std::size_t kReductionChunks = 8;

void add_into(Gradients& acc, const Gradients& g) {
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        for (std::size_t k = 0; k < acc.layers[l].weights.size(); ++k) acc.layers[l].weights[k] += g.layers[l].weights[k];
        for (std::size_t k = 0; k < acc.layers[l].biases.size(); ++k) acc.layers[l].biases[k] += g.layers[l].biases[k];
    }
}

void scale(Gradients& g, double factor) {
    for (LayerParams& l : g.layers) {
        for (double& v : l.weights) v *= factor;
        for (double& v : l.biases) v *= factor;
    }
}

unsigned resolve_threads(unsigned requested) {
    const unsigned hw = std::max(1U, std::thread::hardware_concurrency());
    return std::clamp(requested == 0 ? hw : requested, 1U, static_cast<unsigned>(kReductionChunks));
}

}  // namespace

Gradients batch_gradient(const Checkpoint& model, const PatchSet& patches, std::span<const std::size_t> indices,
                         unsigned threads, double* loss_sum) {
    const std::size_t n = indices.size();
    std::vector<Gradients> partial(kReductionChunks, zeros_like(model.params));
    std::vector<double> losses(kReductionChunks, 0.0);
    auto run_chunk = [&](std::size_t chunk) {
        const std::size_t begin = n * chunk / kReductionChunks;
        const std::size_t end = n * (chunk + 1) / kReductionChunks;
        for (std::size_t i = begin; i < end; ++i) {
            const LabeledPatch& s = patches[indices[i]];
            const ForwardResult fwd = forward(model.net, model.params, patch_to_input(model.net, s.patch));
            losses[chunk] += cross_entropy(fwd.probabilities, s.label);
            backward_accumulate(model.net, model.params, fwd.cache, s.label, partial[chunk]);
        }
    };
    const unsigned workers = resolve_threads(threads);
    if (workers <= 1) {
        for (std::size_t c = 0; c < kReductionChunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t c = w; c < kReductionChunks; c += workers) run_chunk(c);
            });
        }
        for (std::thread& t : pool) t.join();
    }
    Gradients total = std::move(partial[0]);
    for (std::size_t c = 1; c < kReductionChunks; ++c) add_into(total, partial[c]);
    if (n > 0) scale(total, 1.0 / static_cast<double>(n));
    if (loss_sum != nullptr) *loss_sum = std::accumulate(losses.begin(), losses.end(), 0.0);
    return total;
}

TrainResult train(const PatchSet& patches, const PatchSet& validation, const TrainConfig& config,
                  const std::optional<Checkpoint>& warm_start, int round) {
    config.validate();
    if (patches.empty()) throw DegenerateData("training set is empty");
    std::set<int> labels;
    for (const LabeledPatch& s : patches) {
        if (s.label < 0 || s.label >= config.net.class_count) throw InvalidInput("patch label out of range");
        labels.insert(s.label);
    }
    if (labels.size() < 2) throw DegenerateData("training set needs at least two classes");

    TrainResult result;
    if (warm_start) {
        if (warm_start->net != config.net) throw InvalidSpec("warm-start checkpoint does not match the configured network");
        result.checkpoint = *warm_start;
    } else {
        result.checkpoint = {config.net, init_parameters(config.net, derive_seed(config.seed, {0x696e6974ULL}))};
    }
    Checkpoint& model = result.checkpoint;
    RoundReport& report = result.report;
    report.round = round;
    report.training_set_size = patches.size();
    report.initial_loss = mean_loss(model, patches);

    auto rates = lr_at_epoch(config.schedule, 0);
    OptimizerState state =
        OptimizerState::create(model.net, model.params, config.momentum, rates.value_or(LearningRates{}));

    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0;; ++epoch) {
        rates = lr_at_epoch(config.schedule, epoch);
        if (!rates) break;
        state.set_rates(model.net, *rates);
        Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(epoch)}));
        rng.shuffle(order.begin(), order.end());

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            double loss_sum = 0.0;
            const Gradients g =
                batch_gradient(model, patches, std::span(order).subspan(start, len), config.threads, &loss_sum);
            epoch_loss += loss_sum;
            sgd_momentum_step(model.params, g, state);
        }

        EpochLog log;
        log.epoch = epoch;
        log.loss = epoch_loss / static_cast<double>(patches.size());
        const TopKErrors errors = classification_errors(model, validation);
        log.top1_error = errors.top1;
        log.top5_error = errors.top5;
        log.rates = *rates;
        report.epochs.push_back(log);
    }
    report.epochs_run = static_cast<int>(report.epochs.size());
    if (!report.epochs.empty()) {
        report.final_loss = report.epochs.back().loss;
        report.top1_error = report.epochs.back().top1_error;
        report.top5_error = report.epochs.back().top5_error;
    } else {
        report.final_loss = report.initial_loss;
        const TopKErrors errors = classification_errors(model, validation);
        report.top1_error = errors.top1;
        report.top5_error = errors.top5;
    }
    return result;
}

HardExampleSet hard_examples_for_image(std::size_t image_index, const std::vector<Detection>& detections,
                                       const std::vector<Annotation>& ground_truth, double iou_threshold) {
    const MatchResult match = match_detections(detections, ground_truth, iou_threshold);
    HardExampleSet out;
    for (const Detection& d : match.false_positives) out.push_back({image_index, d.box, kBackgroundId});
    for (const Annotation& a : match.false_negatives) out.push_back({image_index, a.box, a.category});
    return out;
}

HardExampleSet mine_hard_examples(const SyntheticDataset& data, const std::vector<std::size_t>& image_indices,
                                  const DetectorFn& detector, double iou_threshold) {
    const auto grouped = group_by_image(data.image_refs, data.annotations);
    HardExampleSet out;
    for (std::size_t index : image_indices) {
        const auto dets = detector(index, data.images.at(index));
        auto hard = hard_examples_for_image(index, dets, grouped[index], iou_threshold);
        out.insert(out.end(), hard.begin(), hard.end());
    }
    return out;
}

DetectorFn make_detector(const Checkpoint& model, const DetectorConfig& config, ProposalCache* cache) {
    return [&model, config, cache](std::size_t index, const Image& img) {
        DetectorConfig local = config;
        local.seed = image_seed(config.seed, index);
        if (cache == nullptr) return detect(img, model, local);
        if (cache->size() <= index) cache->resize(index + 1);
        auto& slot = (*cache)[index];
        if (!slot) slot = propose(img, local.strategies, local.seed, local.propose_options);
        return detect_on_proposals(img, model, *slot, local);
    };
}

PatchSet hard_example_patches(const SyntheticDataset& data, const HardExampleSet& hard, int width, int height) {
    PatchSet out;
    out.reserve(hard.size());
    for (const HardExample& h : hard) {
        out.push_back(make_patch(data.images.at(h.image_index), h.box, h.label, h.image_index, width, height));
    }
    return out;
}

RoundsResult train_rounds(const SyntheticDataset& data, const std::vector<std::size_t>& train_images,
                          const std::vector<std::size_t>& validation_images, const RoundsConfig& config,
                          ProposalCache* cache, const RoundCallback& on_round) {
    config.train.validate();
    const int width = config.train.net.input.width;
    const int height = config.train.net.input.height;
    PatchSamplingOptions sampling = config.sampling;
    sampling.width = width;
    sampling.height = height;

    PatchSet pool = extract_training_patches(data, train_images, sampling);
    const PatchSet validation = extract_training_patches(data, validation_images, sampling);

    RoundsResult result;
    std::optional<Checkpoint> previous;
    for (int round = 1; round <= config.train.rounds; ++round) {
        TrainResult trained = train(pool, validation, config.train, previous, round);
        if (on_round) on_round(round, trained.checkpoint, trained.report);
        result.reports.push_back(trained.report);
        result.checkpoints.push_back(trained.checkpoint);
        previous = std::move(trained.checkpoint);
        if (round == config.train.rounds) break;

        const HardExampleSet hard =
            mine_hard_examples(data, train_images, make_detector(*previous, config.detector, cache));
        result.hard_examples.push_back(hard.size());
        PatchSet extra = hard_example_patches(data, hard, width, height);
        pool.insert(pool.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
    }
    return result;
}

void write_epoch_csv(const std::filesystem::path& path, const RoundReport& report) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << "epoch,loss,top1,top5,lr_body,lr_head\n" << std::setprecision(10);
    for (const EpochLog& e : report.epochs) {
        out << e.epoch << ',' << e.loss << ',' << e.top1_error << ',' << e.top5_error << ',' << e.rates.body << ','
            << e.rates.head << '\n';
    }
}

}  // namespace funcarea
