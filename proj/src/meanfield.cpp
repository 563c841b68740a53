#include "sdce/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sdce::meanfield {

namespace {

void check_measure(const GaussianMeasure& g, const char* who) {
    if (!std::isfinite(g.mean) || !std::isfinite(g.stddev) || g.stddev <= 0.0)
        throw std::invalid_argument(std::string(who) + ": stddev must be positive and finite");
}

void check_rho(double rho) {
    if (!std::isfinite(rho) || rho < 0.0 || rho > 1.0)
        throw std::invalid_argument("mixture weight rho must lie in [0, 1]");
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> samples) : sorted_(std::move(samples)) {
    if (sorted_.empty()) throw std::invalid_argument("empirical measure needs at least one sample");
    for (double x : sorted_)
        if (!std::isfinite(x)) throw std::invalid_argument("empirical samples must be finite");
    std::sort(sorted_.begin(), sorted_.end());
}

double kl_gaussian(const GaussianMeasure& q, const GaussianMeasure& p) {
    check_measure(q, "kl_gaussian q");
    check_measure(p, "kl_gaussian p");
    const double dm = q.mean - p.mean;
    const double vq = q.stddev * q.stddev;
    const double vp = p.stddev * p.stddev;
    return std::log(p.stddev / q.stddev) + (vq + dm * dm) / (2.0 * vp) - 0.5;
}

double w2_gaussian(const GaussianMeasure& a, const GaussianMeasure& b) {
    check_measure(a, "w2_gaussian a");
    check_measure(b, "w2_gaussian b");
    return std::hypot(a.mean - b.mean, a.stddev - b.stddev);
}

double w2_empirical(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("sample transport distance needs equal sample counts");
    const auto& xs = a.sorted();
    const auto& ys = b.sorted();
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - ys[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

double flow_potential(const GaussianMeasure& q, const FlowState& s) {
    check_rho(s.rho);
    return (1.0 - s.rho) * kl_gaussian(q, s.target) + s.rho * kl_gaussian(q, s.previous);
}

FlowGradient flow_gradient(const GaussianMeasure& q, const FlowState& s) {
    check_measure(q, "flow_gradient q");
    check_measure(s.target, "flow_gradient target");
    check_measure(s.previous, "flow_gradient previous");
    check_rho(s.rho);
    const double vt = s.target.stddev * s.target.stddev;
    const double vp = s.previous.stddev * s.previous.stddev;
    FlowGradient g;
    g.d_mean = (1.0 - s.rho) * (q.mean - s.target.mean) + s.rho * (q.mean - s.previous.mean);
    g.d_stddev = (1.0 - s.rho) * (q.stddev - vt / q.stddev) +
                 s.rho * (q.stddev - vp / q.stddev);
    return g;
}

GaussianMeasure flow_step(const FlowState& s) {
    check_measure(s.current, "flow_step current");
    if (!std::isfinite(s.step) || s.step <= 0.0)
        throw std::invalid_argument("flow step must be positive and finite");
    // Stability guard, enforced rather than clamped: the Euler step must be
    // well inside the current spread.
    if (s.step >= s.current.stddev / 2.0)
        throw std::domain_error("flow step too large for the current spread");
    const FlowGradient g = flow_gradient(s.current, s);
    GaussianMeasure next{s.current.mean - s.step * g.d_mean,
                         s.current.stddev - s.step * g.d_stddev};
    if (!(next.stddev > 0.0))
        throw std::domain_error("flow step would drive the spread nonpositive");
    return next;
}

std::vector<GaussianMeasure> iterate_generations(const GaussianMeasure& q0,
                                                 const GaussianMeasure& target,
                                                 double rho, int generations,
                                                 int steps_per_gen, double step) {
    if (generations < 0) throw std::invalid_argument("generation count must be >= 0");
    if (steps_per_gen < 1) throw std::invalid_argument("steps per generation must be >= 1");
    std::vector<GaussianMeasure> out;
    out.reserve(static_cast<std::size_t>(generations) + 1);
    out.push_back(q0);
    GaussianMeasure q = q0;
    for (int gen = 0; gen < generations; ++gen) {
        // The inertial anchor is the prior generation's endpoint, which is
        // exactly this block's starting state; the first generation therefore
        // self-anchors to q0.
        const GaussianMeasure block_start = q;
        for (int i = 0; i < steps_per_gen; ++i)
            q = flow_step(FlowState{q, block_start, target, rho, step});
        out.push_back(q);
    }
    return out;
}

}  // namespace sdce::meanfield
