#pragma once

#include <vector>

namespace sdce::meanfield {

// One-dimensional Gaussian, parametrized by mean and standard deviation.
// Operations validate stddev > 0 on entry.
struct GaussianMeasure {
    double mean = 0.0;
    double stddev = 1.0;
};

// Fixed sample set kept sorted; used for the sample-based transport distance.
class EmpiricalMeasure {
public:
    explicit EmpiricalMeasure(std::vector<double> samples);
    const std::vector<double>& sorted() const { return sorted_; }
    std::size_t size() const { return sorted_.size(); }

private:
    std::vector<double> sorted_;
};

// State of the drift recursion: `current` evolves, pulled toward `target`
// with weight (1 - rho) and toward `previous` (the prior generation's
// endpoint, the self-consumption anchor) with weight rho. `step` is the
// explicit Euler step.
struct FlowState {
    GaussianMeasure current;
    GaussianMeasure previous;
    GaussianMeasure target;
    double rho = 0.0;
    double step = 0.0;
};

// KL(q || p) between Gaussians:
// log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2.
double kl_gaussian(const GaussianMeasure& q, const GaussianMeasure& p);

// 2-Wasserstein distance between Gaussians: hypot(mean gap, stddev gap).
double w2_gaussian(const GaussianMeasure& a, const GaussianMeasure& b);

// Sample 2-Wasserstein distance: root mean squared gap between order
// statistics. Requires equal sample counts.
double w2_empirical(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

// Drift potential V(q) = (1 - rho) KL(q || target) + rho KL(q || previous).
double flow_potential(const GaussianMeasure& q, const FlowState& s);

// Drift used by flow_step, exposed for direct verification. Coincides with
// the exact (mean, stddev) gradient of flow_potential when both anchors have
// unit stddev.
struct FlowGradient {
    double d_mean = 0.0;
    double d_stddev = 0.0;
};
FlowGradient flow_gradient(const GaussianMeasure& q, const FlowState& s);

// One explicit Euler step on s.current. The step must satisfy
// step < current.stddev / 2; a step that is too large, or one that would
// drive the stddev nonpositive, throws std::domain_error (reject, not clamp).
GaussianMeasure flow_step(const FlowState& s);

// Runs `generations` blocks of `steps_per_gen` Euler steps; within a block
// the self-anchor is pinned to the prior block's endpoint (initially q0).
// Returns the endpoints {q0, q1, ..., q_generations}.
std::vector<GaussianMeasure> iterate_generations(const GaussianMeasure& q0,
                                                 const GaussianMeasure& target,
                                                 double rho, int generations,
                                                 int steps_per_gen, double step);

}  // namespace sdce::meanfield
