#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "funcarea/imaging.hpp"

namespace funcarea {

struct Shape {
    int maps = 1;
    int height = 1;
    int width = 1;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(maps) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    bool operator==(const Shape&) const = default;
};

/// Feature maps stored map-major, then row-major.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
    Tensor(Shape s, std::vector<double> v);

    const double& at(int m, int y, int x) const noexcept { return values[offset(m, y, x)]; }
    double& at(int m, int y, int x) noexcept { return values[offset(m, y, x)]; }

private:
    std::size_t offset(int m, int y, int x) const noexcept {
        return (static_cast<std::size_t>(m) * static_cast<std::size_t>(shape.height) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(shape.width) +
               static_cast<std::size_t>(x);
    }
};

struct ConvSpec {
    int in_maps = 1;
    int out_maps = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    bool operator==(const ConvSpec&) const = default;
};
struct ReluSpec {
    bool operator==(const ReluSpec&) const = default;
};
struct MaxPoolSpec {
    int window = 2;
    int stride = 2;
    bool operator==(const MaxPoolSpec&) const = default;
};
struct AvgPoolSpec {
    int window = 2;
    int stride = 2;
    bool operator==(const AvgPoolSpec&) const = default;
};
struct FullyConnectedSpec {
    int in_dim = 1;
    int out_dim = 1;
    bool operator==(const FullyConnectedSpec&) const = default;
};
struct SoftmaxSpec {
    bool operator==(const SoftmaxSpec&) const = default;
};

using LayerSpec = std::variant<ConvSpec, ReluSpec, MaxPoolSpec, AvgPoolSpec, FullyConnectedSpec, SoftmaxSpec>;

/// How a patch is turned into the network input tensor.
enum class Preprocess {
    Raw,        // intensities as stored
    Shift,      // intensity - 0.5
    PatchMean,  // per-channel patch mean removed
};

const char* to_string(Preprocess p) noexcept;
Preprocess preprocess_from_string(const std::string& name);

struct NetworkSpec {
    Shape input;
    std::vector<LayerSpec> layers;
    int class_count = 12;
    Preprocess preprocess = Preprocess::Shift;

    /// Output shape of every layer; throws InvalidSpec (or ShapeError for
    /// windows larger than their input) when the chain is broken.
    std::vector<Shape> layer_shapes() const;
    void validate() const { (void)layer_shapes(); }

    bool operator==(const NetworkSpec&) const = default;
};

/// Line-oriented text form used in checkpoints and net spec files.
std::string to_text(const NetworkSpec& net);
NetworkSpec parse_network_spec(std::string_view text);
NetworkSpec load_network_spec(const std::filesystem::path& path);

/// Five conv layers (pools after 1, 2 and 5) and three fully connected layers
/// on 64x64x3 input, penultimate width 128.
NetworkSpec default_network(int class_count = 12);
/// Two conv blocks and two fully connected layers; fast enough for
/// desk-scale end-to-end runs.
NetworkSpec tiny_network(int input_size = 20, int class_count = 12);

/// Weights and biases of one layer; empty for parameterless layers.
/// Conv weights are [out][in][kh][kw], fully connected weights [out][in].
struct LayerParams {
    std::vector<double> weights;
    std::vector<double> biases;
    bool operator==(const LayerParams&) const = default;
};

struct Parameters {
    std::vector<LayerParams> layers;

    std::size_t count() const noexcept;
    bool operator==(const Parameters&) const = default;
};

using Gradients = Parameters;

/// He-uniform weights (bound sqrt(6/fan_in)) from a seeded stream per layer,
/// zero biases. The final fully connected layer uses a 0.1 scaled bound.
Parameters init_parameters(const NetworkSpec& net, std::uint64_t seed);
Parameters zeros_like(const Parameters& params);
/// Re-initializes one layer as init_parameters would for the given seed.
void init_layer(const NetworkSpec& net, std::size_t layer, std::uint64_t seed, LayerParams& out);
/// Index of the last fully connected layer, or -1.
int head_layer_index(const NetworkSpec& net) noexcept;

/// FNV-1a over the IEEE bit patterns of layers [first, last).
std::uint64_t checksum(const Parameters& params, std::size_t first = 0, std::size_t last = SIZE_MAX);

struct ProbabilityVector {
    std::vector<double> p;

    std::size_t argmax() const noexcept;
};

Tensor conv_forward(const Tensor& input, const ConvSpec& spec, const LayerParams& params);
Tensor relu(const Tensor& input);

enum class PoolKind { Max, Average };
Tensor pool_forward(const Tensor& input, PoolKind kind, int window, int stride);

/// Shift-invariant exponential normalization.
ProbabilityVector softmax(std::span<const double> logits);
/// -log(max(p_target, 1e-12)).
double cross_entropy(const ProbabilityVector& p, int target);

// Layer backward passes. Each returns the gradient w.r.t. the layer input;
// parameter gradients are accumulated into `grad`.
Tensor conv_backward(const Tensor& input, const ConvSpec& spec, const LayerParams& params, const Tensor& grad_out,
                     LayerParams& grad);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);
Tensor pool_backward(const Tensor& input, PoolKind kind, int window, int stride, const Tensor& grad_out);
Tensor fc_forward(const Tensor& input, const FullyConnectedSpec& spec, const LayerParams& params);
Tensor fc_backward(const Tensor& input, const FullyConnectedSpec& spec, const LayerParams& params,
                   const Tensor& grad_out, LayerParams& grad);

/// Patch resized to the network input dims, preprocessed into a tensor.
Tensor image_to_tensor(const Image& patch, Preprocess preprocess);
Tensor patch_to_input(const NetworkSpec& net, const Image& patch);

/// Activations kept by forward for backward.
struct ForwardCache {
    std::vector<Tensor> inputs;  // input of every layer
    ProbabilityVector output;
    std::uint64_t params_fingerprint = 0;
    std::size_t layer_count = 0;
};

struct ForwardResult {
    ProbabilityVector probabilities;
    ForwardCache cache;
};

ForwardResult forward(const NetworkSpec& net, const Parameters& params, const Tensor& input);
/// Convenience: resizes and preprocesses the patch first.
ForwardResult forward(const NetworkSpec& net, const Parameters& params, const Image& patch);
/// Probabilities only, without keeping activations.
ProbabilityVector predict(const NetworkSpec& net, const Parameters& params, const Tensor& input);

/// Gradient of cross_entropy(forward(input), target) w.r.t. every parameter.
Gradients backward(const NetworkSpec& net, const Parameters& params, const ForwardCache& cache, int target);
/// Same, accumulated into `grad` (which must mirror params).
void backward_accumulate(const NetworkSpec& net, const Parameters& params, const ForwardCache& cache, int target,
                         Gradients& grad);

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// using central differences.
double gradient_check(const NetworkSpec& net, const Parameters& params, const Tensor& input, int target,
                      double step = 1e-5);
/// As gradient_check but against caller-supplied analytic gradients.
double compare_gradients(const NetworkSpec& net, const Parameters& params, const Tensor& input, int target,
                         const Gradients& analytic, double step = 1e-5);

struct Checkpoint {
    NetworkSpec net;
    Parameters params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint ("FSCN", version, spec text, little-endian f64 arrays,
/// trailing checksum) plus a `<path>.manifest` text file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
std::string checkpoint_manifest(const Checkpoint& ckpt);

}  // namespace funcarea
