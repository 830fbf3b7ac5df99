#include "funcarea/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "funcarea/errors.hpp"
#include "funcarea/random.hpp"

namespace funcarea {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string shape_text(const Shape& s) {
    return std::to_string(s.maps) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

Shape pooled_shape(const Shape& in, int window, int stride) {
    if (window < 1 || stride < 1) throw InvalidSpec("pool window and stride must be positive");
    if (window > in.height || window > in.width) {
        throw ShapeError("pool window " + std::to_string(window) + " exceeds input " + shape_text(in));
    }
    return {in.maps, (in.height - window) / stride + 1, (in.width - window) / stride + 1};
}

}  // namespace

Tensor::Tensor(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
    if (values.size() != shape.size()) throw ShapeError("tensor value count does not match shape");
}

const char* to_string(Preprocess p) noexcept {
    switch (p) {
        case Preprocess::Raw: return "raw";
        case Preprocess::Shift: return "shift";
        case Preprocess::PatchMean: return "patch-mean";
    }
    return "?";
}

Preprocess preprocess_from_string(const std::string& name) {
    if (name == "raw") return Preprocess::Raw;
    if (name == "shift") return Preprocess::Shift;
    if (name == "patch-mean") return Preprocess::PatchMean;
    throw InvalidSpec("unknown preprocessing '" + name + "'");
}

std::vector<Shape> NetworkSpec::layer_shapes() const {
    if (input.maps < 1 || input.height < 1 || input.width < 1) throw InvalidSpec("input dimensions must be positive");
    if (layers.empty()) throw InvalidSpec("network has no layers");
    if (class_count < 1) throw InvalidSpec("class count must be positive");
    std::vector<Shape> shapes;
    shapes.reserve(layers.size());
    Shape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const bool last = i + 1 == layers.size();
        cur = std::visit(
            overloaded{
                [&](const ConvSpec& c) -> Shape {
                    if (c.in_maps < 1 || c.out_maps < 1 || c.kernel_h < 1 || c.kernel_w < 1) {
                        throw InvalidSpec("conv layer " + std::to_string(i) + " has empty dimensions");
                    }
                    if (c.in_maps != cur.maps) {
                        throw InvalidSpec("conv layer " + std::to_string(i) + " expects " + std::to_string(c.in_maps) +
                                          " maps, gets " + shape_text(cur));
                    }
                    if (c.kernel_h > cur.height || c.kernel_w > cur.width) {
                        throw ShapeError("conv layer " + std::to_string(i) + " kernel exceeds input " +
                                         shape_text(cur));
                    }
                    return {c.out_maps, cur.height - c.kernel_h + 1, cur.width - c.kernel_w + 1};
                },
                [&](const ReluSpec&) -> Shape { return cur; },
                [&](const MaxPoolSpec& p) -> Shape { return pooled_shape(cur, p.window, p.stride); },
                [&](const AvgPoolSpec& p) -> Shape { return pooled_shape(cur, p.window, p.stride); },
                [&](const FullyConnectedSpec& f) -> Shape {
                    if (f.in_dim < 1 || f.out_dim < 1) throw InvalidSpec("fc layer has empty dimensions");
                    if (static_cast<std::size_t>(f.in_dim) != cur.size()) {
                        throw InvalidSpec("fc layer " + std::to_string(i) + " expects " + std::to_string(f.in_dim) +
                                          " inputs, gets " + std::to_string(cur.size()));
                    }
                    return {f.out_dim, 1, 1};
                },
                [&](const SoftmaxSpec&) -> Shape {
                    if (!last) throw InvalidSpec("softmax must be the final layer");
                    if (cur.size() != static_cast<std::size_t>(class_count)) {
                        throw InvalidSpec("softmax input has " + std::to_string(cur.size()) + " values, expected " +
                                          std::to_string(class_count) + " classes");
                    }
                    return {class_count, 1, 1};
                },
            },
            layers[i]);
        shapes.push_back(cur);
    }
    if (!std::holds_alternative<SoftmaxSpec>(layers.back())) throw InvalidSpec("network must end with softmax");
    return shapes;
}

std::string to_text(const NetworkSpec& net) {
    std::ostringstream out;
    out << "input " << net.input.maps << ' ' << net.input.height << ' ' << net.input.width << '\n';
    out << "classes " << net.class_count << '\n';
    out << "preprocess " << to_string(net.preprocess) << '\n';
    for (const LayerSpec& layer : net.layers) {
        std::visit(overloaded{
                       [&](const ConvSpec& c) {
                           out << "conv " << c.in_maps << ' ' << c.out_maps << ' ' << c.kernel_h << ' ' << c.kernel_w;
                       },
                       [&](const ReluSpec&) { out << "relu"; },
                       [&](const MaxPoolSpec& p) { out << "maxpool " << p.window << ' ' << p.stride; },
                       [&](const AvgPoolSpec& p) { out << "avgpool " << p.window << ' ' << p.stride; },
                       [&](const FullyConnectedSpec& f) { out << "fc " << f.in_dim << ' ' << f.out_dim; },
                       [&](const SoftmaxSpec&) { out << "softmax"; },
                   },
                   layer);
        out << '\n';
    }
    return out.str();
}

NetworkSpec parse_network_spec(std::string_view text) {
    NetworkSpec net;
    net.layers.clear();
    bool have_input = false;
    std::istringstream in{std::string(text)};
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string kind;
        if (!(fields >> kind)) continue;
        auto ints = [&](int count) {
            std::vector<int> v(static_cast<std::size_t>(count));
            for (int& x : v) {
                if (!(fields >> x)) throw FormatError("layer '" + kind + "' needs " + std::to_string(count) + " integers", line_no);
            }
            std::string extra;
            if (fields >> extra) throw FormatError("trailing token '" + extra + "'", line_no);
            return v;
        };
        if (kind == "input") {
            const auto v = ints(3);
            net.input = {v[0], v[1], v[2]};
            have_input = true;
        } else if (kind == "classes") {
            net.class_count = ints(1)[0];
        } else if (kind == "preprocess") {
            std::string name;
            fields >> name;
            try {
                net.preprocess = preprocess_from_string(name);
            } catch (const InvalidSpec& e) {
                throw FormatError(e.what(), line_no);
            }
        } else if (kind == "conv") {
            const auto v = ints(4);
            net.layers.emplace_back(ConvSpec{v[0], v[1], v[2], v[3]});
        } else if (kind == "relu") {
            ints(0);
            net.layers.emplace_back(ReluSpec{});
        } else if (kind == "maxpool") {
            const auto v = ints(2);
            net.layers.emplace_back(MaxPoolSpec{v[0], v[1]});
        } else if (kind == "avgpool") {
            const auto v = ints(2);
            net.layers.emplace_back(AvgPoolSpec{v[0], v[1]});
        } else if (kind == "fc") {
            const auto v = ints(2);
            net.layers.emplace_back(FullyConnectedSpec{v[0], v[1]});
        } else if (kind == "softmax") {
            ints(0);
            net.layers.emplace_back(SoftmaxSpec{});
        } else {
            throw FormatError("unknown network directive '" + kind + "'", line_no);
        }
    }
    if (!have_input) throw FormatError("network spec has no input line", line_no);
    net.validate();
    return net;
}

NetworkSpec load_network_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open network spec " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_network_spec(text.str());
}

NetworkSpec default_network(int class_count) {
    NetworkSpec net;
    net.input = {3, 64, 64};
    net.class_count = class_count;
    net.layers = {
        ConvSpec{3, 16, 5, 5},  ReluSpec{}, MaxPoolSpec{2, 2},  // 60 -> 30
        ConvSpec{16, 32, 3, 3}, ReluSpec{}, MaxPoolSpec{2, 2},  // 28 -> 14
        ConvSpec{32, 32, 3, 3}, ReluSpec{},                     // 12
        ConvSpec{32, 32, 3, 3}, ReluSpec{},                     // 10
        ConvSpec{32, 32, 3, 3}, ReluSpec{}, MaxPoolSpec{2, 2},  // 8 -> 4
        FullyConnectedSpec{32 * 4 * 4, 256}, ReluSpec{},
        FullyConnectedSpec{256, 128}, ReluSpec{},
        FullyConnectedSpec{128, class_count}, SoftmaxSpec{},
    };
    net.validate();
    return net;
}

NetworkSpec tiny_network(int input_size, int class_count) {
    NetworkSpec net;
    net.input = {3, input_size, input_size};
    net.class_count = class_count;
    const int after_first = (input_size - 2 - 2) / 2 + 1;
    const int after_second = (after_first - 2 - 2) / 2 + 1;
    net.layers = {
        ConvSpec{3, 8, 3, 3},  ReluSpec{}, MaxPoolSpec{2, 2},
        ConvSpec{8, 16, 3, 3}, ReluSpec{}, MaxPoolSpec{2, 2},
        FullyConnectedSpec{16 * after_second * after_second, 32}, ReluSpec{},
        FullyConnectedSpec{32, class_count}, SoftmaxSpec{},
    };
    net.validate();
    return net;
}

std::size_t Parameters::count() const noexcept {
    std::size_t n = 0;
    for (const LayerParams& l : layers) n += l.weights.size() + l.biases.size();
    return n;
}

int head_layer_index(const NetworkSpec& net) noexcept {
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        if (std::holds_alternative<FullyConnectedSpec>(net.layers[i])) return static_cast<int>(i);
    }
    return -1;
}

void init_layer(const NetworkSpec& net, std::size_t layer, std::uint64_t seed, LayerParams& out) {
    out = {};
    const LayerSpec& spec = net.layers.at(layer);
    std::size_t fan_in = 0;
    std::size_t weight_count = 0;
    std::size_t bias_count = 0;
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
        fan_in = static_cast<std::size_t>(c->in_maps * c->kernel_h * c->kernel_w);
        weight_count = fan_in * static_cast<std::size_t>(c->out_maps);
        bias_count = static_cast<std::size_t>(c->out_maps);
    } else if (const auto* f = std::get_if<FullyConnectedSpec>(&spec)) {
        fan_in = static_cast<std::size_t>(f->in_dim);
        weight_count = fan_in * static_cast<std::size_t>(f->out_dim);
        bias_count = static_cast<std::size_t>(f->out_dim);
    } else {
        return;
    }
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    if (static_cast<int>(layer) == head_layer_index(net)) bound *= 0.1;
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(layer)}));
    out.weights.resize(weight_count);
    for (double& w : out.weights) w = rng.uniform(-bound, bound);
    out.biases.assign(bias_count, 0.0);
}

Parameters init_parameters(const NetworkSpec& net, std::uint64_t seed) {
    net.validate();
    Parameters params;
    params.layers.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) init_layer(net, i, seed, params.layers[i]);
    return params;
}

Parameters zeros_like(const Parameters& params) {
    Parameters out;
    out.layers.reserve(params.layers.size());
    for (const LayerParams& l : params.layers) {
        out.layers.push_back({std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.biases.size(), 0.0)});
    }
    return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv_bytes(std::uint64_t h, std::span<const std::uint8_t> bytes) {
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t fnv_doubles(std::uint64_t h, std::span<const double> values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= bits & 0xFFU;
            h *= kFnvPrime;
            bits >>= 8;
        }
    }
    return h;
}

// Cheap identity of a parameter set for cache validation.
std::uint64_t fingerprint(const Parameters& params) {
    std::uint64_t h = kFnvOffset;
    for (const LayerParams& l : params.layers) {
        h = mix64(h ^ l.weights.size());
        for (double v : l.weights) h = (h ^ std::bit_cast<std::uint64_t>(v)) * kFnvPrime;
        for (double v : l.biases) h = (h ^ std::bit_cast<std::uint64_t>(v)) * kFnvPrime;
    }
    return h;
}

}  // namespace

std::uint64_t checksum(const Parameters& params, std::size_t first, std::size_t last) {
    std::uint64_t h = kFnvOffset;
    last = std::min(last, params.layers.size());
    for (std::size_t i = first; i < last; ++i) {
        h = fnv_doubles(h, params.layers[i].weights);
        h = fnv_doubles(h, params.layers[i].biases);
    }
    return h;
}

std::size_t ProbabilityVector::argmax() const noexcept {
    return static_cast<std::size_t>(std::distance(p.begin(), std::max_element(p.begin(), p.end())));
}

Tensor conv_forward(const Tensor& input, const ConvSpec& spec, const LayerParams& params) {
    const Shape& in = input.shape;
    if (in.maps != spec.in_maps) throw ShapeError("conv input has " + std::to_string(in.maps) + " maps, expected " +
                                                  std::to_string(spec.in_maps));
    if (spec.kernel_h > in.height || spec.kernel_w > in.width) throw ShapeError("conv kernel larger than input");
    const Shape out_shape{spec.out_maps, in.height - spec.kernel_h + 1, in.width - spec.kernel_w + 1};
    const std::size_t kernel_size = static_cast<std::size_t>(spec.kernel_h * spec.kernel_w);
    if (params.weights.size() != kernel_size * static_cast<std::size_t>(spec.in_maps * spec.out_maps) ||
        params.biases.size() != static_cast<std::size_t>(spec.out_maps)) {
        throw ShapeError("conv parameters do not match layer spec");
    }
    Tensor out(out_shape);
    const int oh = out_shape.height;
    const int ow = out_shape.width;
    for (int o = 0; o < spec.out_maps; ++o) {
        double* dst = &out.at(o, 0, 0);
        std::fill(dst, dst + static_cast<std::ptrdiff_t>(oh * ow), params.biases[static_cast<std::size_t>(o)]);
        for (int i = 0; i < spec.in_maps; ++i) {
            const double* w = &params.weights[(static_cast<std::size_t>(o) * static_cast<std::size_t>(spec.in_maps) +
                                               static_cast<std::size_t>(i)) *
                                              kernel_size];
            for (int u = 0; u < spec.kernel_h; ++u) {
                for (int v = 0; v < spec.kernel_w; ++v) {
                    const double wk = w[u * spec.kernel_w + v];
                    if (wk == 0.0) continue;
                    for (int r = 0; r < oh; ++r) {
                        const double* src = &input.at(i, r + u, v);
                        double* row = dst + static_cast<std::ptrdiff_t>(r * ow);
                        for (int c = 0; c < ow; ++c) row[c] += wk * src[c];
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv_backward(const Tensor& input, const ConvSpec& spec, const LayerParams& params, const Tensor& grad_out,
                     LayerParams& grad) {
    const int oh = grad_out.shape.height;
    const int ow = grad_out.shape.width;
    const std::size_t kernel_size = static_cast<std::size_t>(spec.kernel_h * spec.kernel_w);
    Tensor grad_in(input.shape);
    for (int o = 0; o < spec.out_maps; ++o) {
        const double* g = &grad_out.at(o, 0, 0);
        double bias_sum = 0.0;
        for (int k = 0; k < oh * ow; ++k) bias_sum += g[k];
        grad.biases[static_cast<std::size_t>(o)] += bias_sum;
        for (int i = 0; i < spec.in_maps; ++i) {
            const std::size_t base =
                (static_cast<std::size_t>(o) * static_cast<std::size_t>(spec.in_maps) + static_cast<std::size_t>(i)) *
                kernel_size;
            for (int u = 0; u < spec.kernel_h; ++u) {
                for (int v = 0; v < spec.kernel_w; ++v) {
                    const std::size_t widx = base + static_cast<std::size_t>(u * spec.kernel_w + v);
                    const double wk = params.weights[widx];
                    double acc = 0.0;
                    for (int r = 0; r < oh; ++r) {
                        const double* src = &input.at(i, r + u, v);
                        double* dsrc = &grad_in.at(i, r + u, v);
                        const double* grow = g + static_cast<std::ptrdiff_t>(r * ow);
                        for (int c = 0; c < ow; ++c) {
                            acc += grow[c] * src[c];
                            dsrc[c] += wk * grow[c];
                        }
                    }
                    grad.weights[widx] += acc;
                }
            }
        }
    }
    return grad_in;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.values) v = std::max(v, 0.0);
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    Tensor g(input.shape);
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = input.values[i] > 0.0 ? grad_out.values[i] : 0.0;
    return g;
}

Tensor pool_forward(const Tensor& input, PoolKind kind, int window, int stride) {
    const Shape out_shape = pooled_shape(input.shape, window, stride);
    Tensor out(out_shape);
    const double inv = 1.0 / static_cast<double>(window * window);
    for (int m = 0; m < out_shape.maps; ++m) {
        for (int r = 0; r < out_shape.height; ++r) {
            for (int c = 0; c < out_shape.width; ++c) {
                double acc = kind == PoolKind::Max ? -std::numeric_limits<double>::infinity() : 0.0;
                for (int u = 0; u < window; ++u) {
                    for (int v = 0; v < window; ++v) {
                        const double x = input.at(m, r * stride + u, c * stride + v);
                        if (kind == PoolKind::Max) {
                            if (x > acc) acc = x;
                        } else {
                            acc += x;
                        }
                    }
                }
                out.at(m, r, c) = kind == PoolKind::Max ? acc : acc * inv;
            }
        }
    }
    return out;
}

Tensor pool_backward(const Tensor& input, PoolKind kind, int window, int stride, const Tensor& grad_out) {
    Tensor g(input.shape);
    const double inv = 1.0 / static_cast<double>(window * window);
    for (int m = 0; m < grad_out.shape.maps; ++m) {
        for (int r = 0; r < grad_out.shape.height; ++r) {
            for (int c = 0; c < grad_out.shape.width; ++c) {
                const double upstream = grad_out.at(m, r, c);
                if (kind == PoolKind::Max) {
                    // First maximum in row-major window order receives the gradient.
                    int best_u = 0;
                    int best_v = 0;
                    double best = input.at(m, r * stride, c * stride);
                    for (int u = 0; u < window; ++u) {
                        for (int v = 0; v < window; ++v) {
                            const double x = input.at(m, r * stride + u, c * stride + v);
                            if (x > best) {
                                best = x;
                                best_u = u;
                                best_v = v;
                            }
                        }
                    }
                    g.at(m, r * stride + best_u, c * stride + best_v) += upstream;
                } else {
                    for (int u = 0; u < window; ++u) {
                        for (int v = 0; v < window; ++v) g.at(m, r * stride + u, c * stride + v) += upstream * inv;
                    }
                }
            }
        }
    }
    return g;
}

Tensor fc_forward(const Tensor& input, const FullyConnectedSpec& spec, const LayerParams& params) {
    if (input.values.size() != static_cast<std::size_t>(spec.in_dim)) throw ShapeError("fc input size mismatch");
    if (params.weights.size() != static_cast<std::size_t>(spec.in_dim) * static_cast<std::size_t>(spec.out_dim) ||
        params.biases.size() != static_cast<std::size_t>(spec.out_dim)) {
        throw ShapeError("fc parameters do not match layer spec");
    }
    Tensor out(Shape{spec.out_dim, 1, 1});
    const auto in_dim = static_cast<std::size_t>(spec.in_dim);
    for (std::size_t o = 0; o < static_cast<std::size_t>(spec.out_dim); ++o) {
        const double* w = &params.weights[o * in_dim];
        double acc = params.biases[o];
        for (std::size_t i = 0; i < in_dim; ++i) acc += w[i] * input.values[i];
        out.values[o] = acc;
    }
    return out;
}

Tensor fc_backward(const Tensor& input, const FullyConnectedSpec& spec, const LayerParams& params,
                   const Tensor& grad_out, LayerParams& grad) {
    Tensor grad_in(input.shape);
    const auto in_dim = static_cast<std::size_t>(spec.in_dim);
    for (std::size_t o = 0; o < static_cast<std::size_t>(spec.out_dim); ++o) {
        const double g = grad_out.values[o];
        grad.biases[o] += g;
        if (g == 0.0) continue;
        const double* w = &params.weights[o * in_dim];
        double* gw = &grad.weights[o * in_dim];
        for (std::size_t i = 0; i < in_dim; ++i) {
            gw[i] += g * input.values[i];
            grad_in.values[i] += g * w[i];
        }
    }
    return grad_in;
}

ProbabilityVector softmax(std::span<const double> logits) {
    ProbabilityVector out;
    if (logits.empty()) return out;
    const double top = *std::max_element(logits.begin(), logits.end());
    out.p.resize(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.p[i] = std::exp(logits[i] - top);
        total += out.p[i];
    }
    for (double& v : out.p) v /= total;
    return out;
}

double cross_entropy(const ProbabilityVector& p, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= p.p.size()) {
        throw InvalidInput("target class " + std::to_string(target) + " out of range");
    }
    return -std::log(std::max(p.p[static_cast<std::size_t>(target)], 1e-12));
}

Tensor image_to_tensor(const Image& patch, Preprocess preprocess) {
    Tensor t(Shape{patch.channels(), patch.height(), patch.width()});
    for (int c = 0; c < patch.channels(); ++c) {
        double offset = 0.0;
        if (preprocess == Preprocess::Shift) {
            offset = 0.5;
        } else if (preprocess == Preprocess::PatchMean) {
            double sum = 0.0;
            for (int y = 0; y < patch.height(); ++y) {
                for (int x = 0; x < patch.width(); ++x) sum += patch.at(x, y, c);
            }
            offset = sum / static_cast<double>(patch.pixel_count());
        }
        for (int y = 0; y < patch.height(); ++y) {
            for (int x = 0; x < patch.width(); ++x) t.at(c, y, x) = patch.at(x, y, c) - offset;
        }
    }
    return t;
}

Tensor patch_to_input(const NetworkSpec& net, const Image& patch) {
    if (patch.channels() != net.input.maps) {
        throw ShapeError("patch has " + std::to_string(patch.channels()) + " channels, network expects " +
                         std::to_string(net.input.maps));
    }
    return image_to_tensor(resize_bilinear(patch, net.input.width, net.input.height), net.preprocess);
}

namespace {

Tensor layer_forward(const LayerSpec& spec, const LayerParams& params, const Tensor& x) {
    return std::visit(overloaded{
                          [&](const ConvSpec& c) { return conv_forward(x, c, params); },
                          [&](const ReluSpec&) { return relu(x); },
                          [&](const MaxPoolSpec& p) { return pool_forward(x, PoolKind::Max, p.window, p.stride); },
                          [&](const AvgPoolSpec& p) { return pool_forward(x, PoolKind::Average, p.window, p.stride); },
                          [&](const FullyConnectedSpec& f) { return fc_forward(x, f, params); },
                          [&](const SoftmaxSpec&) {
                              ProbabilityVector p = softmax(x.values);
                              const Shape shape{static_cast<int>(p.p.size()), 1, 1};
                              return Tensor(shape, std::move(p.p));
                          },
                      },
                      spec);
}

void check_compatible(const NetworkSpec& net, const Parameters& params, const Tensor& input) {
    if (params.layers.size() != net.layers.size()) throw ShapeError("parameters do not match network layer count");
    if (input.shape != net.input) {
        throw ShapeError("input " + shape_text(input.shape) + " does not match network input " + shape_text(net.input));
    }
}

}  // namespace

ForwardResult forward(const NetworkSpec& net, const Parameters& params, const Tensor& input) {
    check_compatible(net, params, input);
    ForwardResult result;
    result.cache.inputs.reserve(net.layers.size());
    Tensor x = input;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Tensor y = layer_forward(net.layers[i], params.layers[i], x);
        result.cache.inputs.push_back(std::move(x));
        x = std::move(y);
    }
    result.probabilities.p = std::move(x.values);
    result.cache.output = result.probabilities;
    result.cache.params_fingerprint = fingerprint(params);
    result.cache.layer_count = net.layers.size();
    return result;
}

ForwardResult forward(const NetworkSpec& net, const Parameters& params, const Image& patch) {
    return forward(net, params, patch_to_input(net, patch));
}

ProbabilityVector predict(const NetworkSpec& net, const Parameters& params, const Tensor& input) {
    check_compatible(net, params, input);
    Tensor x = input;
    for (std::size_t i = 0; i < net.layers.size(); ++i) x = layer_forward(net.layers[i], params.layers[i], x);
    return ProbabilityVector{std::move(x.values)};
}

void backward_accumulate(const NetworkSpec& net, const Parameters& params, const ForwardCache& cache, int target,
                         Gradients& grad) {
    if (cache.layer_count != net.layers.size() || cache.inputs.size() != net.layers.size()) {
        throw InvalidState("forward cache does not belong to this network");
    }
    if (cache.params_fingerprint != fingerprint(params)) {
        throw InvalidState("forward cache was computed with different parameters");
    }
    if (grad.layers.size() != params.layers.size()) throw ShapeError("gradient buffer does not mirror parameters");
    if (target < 0 || target >= net.class_count) throw InvalidInput("target class out of range");

    // Softmax + cross-entropy: d loss / d logits = p - onehot(target).
    Tensor g(Shape{net.class_count, 1, 1}, cache.output.p);
    g.values[static_cast<std::size_t>(target)] -= 1.0;

    for (std::size_t i = net.layers.size() - 1; i-- > 0;) {
        const Tensor& x = cache.inputs[i];
        g = std::visit(overloaded{
                           [&](const ConvSpec& c) { return conv_backward(x, c, params.layers[i], g, grad.layers[i]); },
                           [&](const ReluSpec&) { return relu_backward(x, g); },
                           [&](const MaxPoolSpec& p) {
                               return pool_backward(x, PoolKind::Max, p.window, p.stride, g);
                           },
                           [&](const AvgPoolSpec& p) {
                               return pool_backward(x, PoolKind::Average, p.window, p.stride, g);
                           },
                           [&](const FullyConnectedSpec& f) {
                               return fc_backward(x, f, params.layers[i], g, grad.layers[i]);
                           },
                           [&](const SoftmaxSpec&) -> Tensor {
                               throw InvalidSpec("softmax may only appear as the final layer");
                           },
                       },
                       net.layers[i]);
    }
}

Gradients backward(const NetworkSpec& net, const Parameters& params, const ForwardCache& cache, int target) {
    Gradients grad = zeros_like(params);
    backward_accumulate(net, params, cache, target, grad);
    return grad;
}

double compare_gradients(const NetworkSpec& net, const Parameters& params, const Tensor& input, int target,
                         const Gradients& analytic, double step) {
    Parameters probe = params;
    auto loss = [&]() { return cross_entropy(predict(net, probe, input), target); };
    double worst = 0.0;
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        for (auto [values, reference] :
             {std::pair{&probe.layers[l].weights, &analytic.layers[l].weights},
              std::pair{&probe.layers[l].biases, &analytic.layers[l].biases}}) {
            for (std::size_t k = 0; k < values->size(); ++k) {
                const double saved = (*values)[k];
                (*values)[k] = saved + step;
                const double plus = loss();
                (*values)[k] = saved - step;
                const double minus = loss();
                (*values)[k] = saved;
                const double numeric = (plus - minus) / (2.0 * step);
                const double a = (*reference)[k];
                const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
                worst = std::max(worst, std::abs(a - numeric) / denom);
            }
        }
    }
    return worst;
}

double gradient_check(const NetworkSpec& net, const Parameters& params, const Tensor& input, int target, double step) {
    const ForwardResult fwd = forward(net, params, input);
    return compare_gradients(net, params, input, target, backward(net, params, fwd.cache, target), step);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'F', 'S', 'C', 'N'};

class ByteWriter {
public:
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64s(const std::vector<double>& values) {
        u64(values.size());
        for (double v : values) u64(std::bit_cast<std::uint64_t>(v));
    }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
        need(n, what);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32(const char* what) {
        auto b = bytes(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return v;
    }
    std::uint64_t u64(const char* what) {
        auto b = bytes(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return v;
    }
    std::vector<double> f64s(std::size_t expected, const char* what) {
        const std::size_t at = pos_;
        const std::uint64_t n = u64(what);
        if (n != expected) {
            throw FormatError(std::string(what) + " has " + std::to_string(n) + " values, expected " +
                                  std::to_string(expected),
                              at);
        }
        std::vector<double> values(n);
        for (double& v : values) {
            const std::size_t value_at = pos_;
            v = std::bit_cast<double>(u64(what));
            if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + what, value_at);
        }
        return values;
    }
    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::pair<std::size_t, std::size_t> expected_counts(const LayerSpec& spec) {
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
        return {static_cast<std::size_t>(c->in_maps * c->out_maps * c->kernel_h * c->kernel_w),
                static_cast<std::size_t>(c->out_maps)};
    }
    if (const auto* f = std::get_if<FullyConnectedSpec>(&spec)) {
        return {static_cast<std::size_t>(f->in_dim) * static_cast<std::size_t>(f->out_dim),
                static_cast<std::size_t>(f->out_dim)};
    }
    return {0, 0};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    ckpt.net.validate();
    if (ckpt.params.layers.size() != ckpt.net.layers.size()) throw ShapeError("parameters do not match network");
    ByteWriter w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    const std::string spec = to_text(ckpt.net);
    w.u32(static_cast<std::uint32_t>(spec.size()));
    w.bytes({reinterpret_cast<const std::uint8_t*>(spec.data()), spec.size()});
    w.u32(static_cast<std::uint32_t>(ckpt.params.layers.size()));
    for (const LayerParams& l : ckpt.params.layers) {
        w.f64s(l.weights);
        w.f64s(l.biases);
    }
    const std::uint64_t sum = fnv_bytes(kFnvOffset, w.buffer());
    w.u64(sum);
    return std::move(w.buffer());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto magic = r.bytes(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw FormatError("bad checkpoint magic", 0);
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    }
    const std::size_t spec_at = r.position();
    const std::uint32_t spec_len = r.u32("spec length");
    auto spec_bytes = r.bytes(spec_len, "network spec");
    Checkpoint ckpt;
    try {
        ckpt.net = parse_network_spec({reinterpret_cast<const char*>(spec_bytes.data()), spec_bytes.size()});
    } catch (const Error& e) {
        throw FormatError(std::string("invalid network spec: ") + e.what(), spec_at);
    }
    const std::size_t count_at = r.position();
    const std::uint32_t layer_count = r.u32("layer count");
    if (layer_count != ckpt.net.layers.size()) {
        throw FormatError("layer count " + std::to_string(layer_count) + " does not match network", count_at);
    }
    ckpt.params.layers.resize(layer_count);
    for (std::size_t i = 0; i < layer_count; ++i) {
        const auto [weights, biases] = expected_counts(ckpt.net.layers[i]);
        ckpt.params.layers[i].weights = r.f64s(weights, "layer weights");
        ckpt.params.layers[i].biases = r.f64s(biases, "layer biases");
    }
    const std::size_t sum_at = r.position();
    const std::uint64_t expected = fnv_bytes(kFnvOffset, bytes.first(sum_at));
    if (r.u64("checksum") != expected) throw FormatError("checkpoint checksum mismatch", sum_at);
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.position());
    return ckpt;
}

std::string checkpoint_manifest(const Checkpoint& ckpt) {
    std::ostringstream out;
    out << "format FSCN " << kCheckpointVersion << '\n';
    out << "parameters " << ckpt.params.count() << '\n';
    const auto shapes = ckpt.net.layer_shapes();
    for (std::size_t i = 0; i < ckpt.net.layers.size(); ++i) {
        out << "layer " << i << ' ';
        std::visit(overloaded{
                       [&](const ConvSpec&) { out << "conv"; },
                       [&](const ReluSpec&) { out << "relu"; },
                       [&](const MaxPoolSpec&) { out << "maxpool"; },
                       [&](const AvgPoolSpec&) { out << "avgpool"; },
                       [&](const FullyConnectedSpec&) { out << "fc"; },
                       [&](const SoftmaxSpec&) { out << "softmax"; },
                   },
                   ckpt.net.layers[i]);
        out << " out " << shape_text(shapes[i]) << " weights " << ckpt.params.layers[i].weights.size() << " biases "
            << ckpt.params.layers[i].biases.size() << '\n';
    }
    out << "checksum " << std::hex << std::setw(16) << std::setfill('0') << checksum(ckpt.params) << '\n';
    return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    std::ofstream manifest(path.string() + ".manifest");
    manifest << checkpoint_manifest(ckpt);
    if (!out || !manifest) throw InvalidInput("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace funcarea
