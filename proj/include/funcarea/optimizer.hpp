#pragma once

#include <optional>
#include <vector>

#include "funcarea/neuralnet.hpp"

namespace funcarea {

/// Step-decay learning-rate schedule with separate body and head rates.
struct Schedule {
    double base_lr_body = 0.005;
    double base_lr_head = 0.05;
    std::vector<int> drop_epochs{40, 60};
    double drop_factor = 0.1;
    int stop_epoch = 70;

    void validate() const;
};

struct LearningRates {
    double body = 0.0;
    double head = 0.0;
    bool operator==(const LearningRates&) const = default;
};

/// Rates in effect for `epoch`, or nullopt once epoch >= stop_epoch.
std::optional<LearningRates> lr_at_epoch(const Schedule& schedule, int epoch);

/// Momentum SGD state: one velocity buffer per parameter and a rate per layer.
struct OptimizerState {
    Parameters velocity;
    double momentum = 0.9;
    std::vector<double> per_layer_lr;

    /// Zero velocity; every layer gets `rates.body` except the last
    /// parameterized layer, which gets `rates.head`.
    static OptimizerState create(const NetworkSpec& net, const Parameters& params, double momentum,
                                 LearningRates rates);
    void set_rates(const NetworkSpec& net, LearningRates rates);
};

/// v <- momentum * v - lr * g;  theta <- theta + v.
void sgd_momentum_step(Parameters& params, const Gradients& grads, OptimizerState& state);

/// Momentum recurrence on the quadratic loss curvature/2 * theta^2.
struct DampingProbe {
    double curvature = 1.0;
    double lr = 0.1;
    double momentum = 0.9;
    int steps = 100;
    double theta0 = 1.0;
};

/// Spectral radius of [[1 - lr*curvature, momentum], [-lr*curvature, momentum]],
/// the linear map (theta_t, v_t) -> (theta_{t+1}, v_{t+1}).
double spectral_radius(const DampingProbe& probe);

/// True when the iteration matrix has a complex eigenpair (oscillatory decay).
bool underdamped(const DampingProbe& probe);

/// theta_0 .. theta_steps, starting with zero velocity.
std::vector<double> simulate_quadratic(const DampingProbe& probe);

}  // namespace funcarea
