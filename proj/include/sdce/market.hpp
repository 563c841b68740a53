#pragma once

#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace sdce::market {

// One data feed. provenance is the human-origin share of the feed's content
// (1 = fully human, 0 = fully synthetic), volume the units supplied per
// generation, price the posted per-unit ask.
struct ProducerState {
    int id = 0;
    double provenance = 1.0;
    double volume = 0.0;
    double price = 0.0;
};

// One model trainer. bundle holds the per-producer purchased quantity and has
// one entry per producer. revenue_weight converts quality units into the
// compensation base; quality_price is the market price of one quality unit.
struct TrainerState {
    int id = 0;
    std::vector<double> bundle;
    double labor = 1.0;
    double capital = 1.0;
    double revenue_weight = 1.0;
    double quality_price = 1.0;
};

// Affine response of the output elasticities to the contamination ratio: the
// human-data exponent rises with contamination, the synthetic-data exponent
// falls and is floored at zero. The exponent budget
// labor_exp + capital_exp + human(rho) + synth(rho) <= 1 is checked at
// rho = 0 and rho = 1, which bounds the affine pieces on the whole interval.
class ElasticitySchedule {
public:
    ElasticitySchedule(double scale, double labor_exp, double capital_exp,
                       double human_base, double human_slope,
                       double synth_base, double synth_slope);

    double scale() const { return scale_; }
    double labor_exp() const { return labor_exp_; }
    double capital_exp() const { return capital_exp_; }
    double human_base() const { return human_base_; }
    double human_slope() const { return human_slope_; }
    double synth_base() const { return synth_base_; }
    double synth_slope() const { return synth_slope_; }

    // gamma(rho), nondecreasing in rho.
    double human(double rho) const;
    // delta(rho), nonincreasing in rho, floored at zero.
    double synth(double rho) const;

private:
    double scale_, labor_exp_, capital_exp_;
    double human_base_, human_slope_, synth_base_, synth_slope_;
};

struct MarketState {
    std::vector<ProducerState> producers;
    std::vector<TrainerState> trainers;
    double rho = 0.0;
    int generation = 0;
};

// Volume-weighted synthetic share of supply: 1 - sum(h_i phi_i) / sum(h_i).
// Throws std::domain_error when total volume is not positive.
double contamination_ratio(std::span<const ProducerState> producers);

// Splits a bundle into (human units, synthetic units) by provenance.
std::pair<double, double> human_synth_split(std::span<const double> bundle,
                                            std::span<const ProducerState> producers);

// Contaminated Cobb-Douglas output. Convention 0^0 = 1, 0^x = 0 for x > 0,
// so a zero input with a positive exponent collapses output to zero.
double production_quality(const TrainerState& trainer, double human_units,
                          double synth_units, double rho,
                          const ElasticitySchedule& sched);

// Stage payoff: quality revenue minus price payments plus a per-human-unit
// subsidy. quality_scale multiplies realized quality (collapse damage hook).
double trainer_stage_payoff(const TrainerState& trainer,
                            std::span<const ProducerState> producers, double rho,
                            const ElasticitySchedule& sched, double subsidy,
                            double quality_scale = 1.0);

// Leave-one-out additive compensation: producer i receives
// sum_j revenue_weight_j * [Q_j(b_j) - Q_j(b_j with entry i zeroed)].
std::vector<double> shapley_compensation(const MarketState& m,
                                         const ElasticitySchedule& sched);

// max_i | sum_j b_ij - target_i |. target_supplies has one entry per producer.
double clearing_residual(const MarketState& m,
                         std::span<const double> target_supplies);

// Equilibrium-gap estimate: the larger of (a) the best unilateral stage-payoff
// improvement available to any trainer over single-coordinate moves onto
// deviation_levels, and (b) the clearing residual against the producers' own
// volumes. subsidy and quality_scale define the payoff environment.
// bundle_cap bounds the total units a deviating trainer may hold; moves that
// would push the bundle total above it are infeasible and excluded.
double epsilon_sdce_residual(const MarketState& m, const ElasticitySchedule& sched,
                             std::span<const double> deviation_levels,
                             double subsidy = 0.0, double quality_scale = 1.0,
                             double bundle_cap =
                                 std::numeric_limits<double>::infinity());

}  // namespace sdce::market
