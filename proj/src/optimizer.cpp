#include "funcarea/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "funcarea/errors.hpp"

namespace funcarea {

void Schedule::validate() const {
    if (!(base_lr_body >= 0.0) || !(base_lr_head >= 0.0)) throw InvalidInput("learning rates must be non-negative");
    if (!(drop_factor > 0.0 && drop_factor < 1.0)) throw InvalidInput("drop factor must lie in (0,1)");
    if (!std::is_sorted(drop_epochs.begin(), drop_epochs.end()) ||
        std::adjacent_find(drop_epochs.begin(), drop_epochs.end()) != drop_epochs.end()) {
        throw InvalidInput("drop epochs must be strictly increasing");
    }
    if (stop_epoch < 0) throw InvalidInput("stop epoch must be non-negative");
}

std::optional<LearningRates> lr_at_epoch(const Schedule& schedule, int epoch) {
    if (epoch >= schedule.stop_epoch) return std::nullopt;
    double scale = 1.0;
    for (int drop : schedule.drop_epochs) {
        if (epoch >= drop) scale *= schedule.drop_factor;
    }
    return LearningRates{schedule.base_lr_body * scale, schedule.base_lr_head * scale};
}

namespace {

int last_parameterized_layer(const NetworkSpec& net) {
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        if (std::holds_alternative<ConvSpec>(net.layers[i]) || std::holds_alternative<FullyConnectedSpec>(net.layers[i])) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

}  // namespace

OptimizerState OptimizerState::create(const NetworkSpec& net, const Parameters& params, double momentum,
                                      LearningRates rates) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0,1)");
    OptimizerState state;
    state.velocity = zeros_like(params);
    state.momentum = momentum;
    state.set_rates(net, rates);
    return state;
}

void OptimizerState::set_rates(const NetworkSpec& net, LearningRates rates) {
    const int head = last_parameterized_layer(net);
    per_layer_lr.assign(net.layers.size(), rates.body);
    if (head >= 0) per_layer_lr[static_cast<std::size_t>(head)] = rates.head;
}

void sgd_momentum_step(Parameters& params, const Gradients& grads, OptimizerState& state) {
    const std::size_t n = params.layers.size();
    if (grads.layers.size() != n || state.velocity.layers.size() != n || state.per_layer_lr.size() != n) {
        throw InvalidInput("optimizer shapes do not match parameters");
    }
    for (std::size_t l = 0; l < n; ++l) {
        const double lr = state.per_layer_lr[l];
        auto update = [&](std::vector<double>& theta, const std::vector<double>& g, std::vector<double>& v) {
            if (theta.size() != g.size() || theta.size() != v.size()) {
                throw InvalidInput("gradient shape mismatch in layer " + std::to_string(l));
            }
            for (std::size_t k = 0; k < theta.size(); ++k) {
                v[k] = state.momentum * v[k] - lr * g[k];
                theta[k] += v[k];
            }
        };
        update(params.layers[l].weights, grads.layers[l].weights, state.velocity.layers[l].weights);
        update(params.layers[l].biases, grads.layers[l].biases, state.velocity.layers[l].biases);
    }
}

double spectral_radius(const DampingProbe& probe) {
    // Characteristic polynomial z^2 - trace*z + det with det = momentum.
    const double a = probe.lr * probe.curvature;
    const double trace = 1.0 - a + probe.momentum;
    const double det = probe.momentum;
    const double disc = trace * trace - 4.0 * det;
    if (disc < 0.0) return std::sqrt(det);
    const double root = std::sqrt(disc);
    // Stable pairing of the two real roots.
    const double q = -0.5 * (-trace + std::copysign(root, -trace));
    const double z1 = q;
    const double z2 = q != 0.0 ? det / q : 0.0;
    return std::max(std::abs(z1), std::abs(z2));
}

bool underdamped(const DampingProbe& probe) {
    const double trace = 1.0 - probe.lr * probe.curvature + probe.momentum;
    return trace * trace < 4.0 * probe.momentum;
}

std::vector<double> simulate_quadratic(const DampingProbe& probe) {
    std::vector<double> theta;
    theta.reserve(static_cast<std::size_t>(std::max(probe.steps, 0)) + 1);
    double x = probe.theta0;
    double v = 0.0;
    theta.push_back(x);
    for (int t = 0; t < probe.steps; ++t) {
        v = probe.momentum * v - probe.lr * probe.curvature * x;
        x += v;
        theta.push_back(x);
    }
    return theta;
}

}  // namespace funcarea
