#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdce/market.hpp"
#include "sdce/meanfield.hpp"
#include "sdce/rng.hpp"
#include "sdce/welfare.hpp"

namespace sdce::pmir {

// Comparison regimes sharing one loop implementation. Producers respond to
// the market through two channels: capacity reinvestment proportional to
// relative income (active whenever any income flows), and demand-tracking
// supply adjustment plus price learning (the market-clearing channel,
// exclusive to the full loop).
//   pmir  full loop: Shapley compensation, reward shaping, price learning,
//         demand-tracking supply, income reinvestment;
//   b1    open scraping: zero prices, fixed uniform mid-grid bundles, no
//         compensation; all incomes are zero, so supply never moves;
//   b2    statutory royalty: flat per-unit price, bundles learn, royalty
//         revenue drives reinvestment, no clearing and no price moves;
//   b3    Shapley compensation at frozen initial prices, bundles learn,
//         compensation income drives reinvestment, no clearing.
// With beta_shape = 0 and epsilon_explore = 0 the pmir path reduces exactly
// to b3; the test suite asserts trajectory equality.
enum class Regime { pmir, b1, b2, b3 };

Regime parse_regime(const std::string& name);
std::string to_string(Regime regime);

struct Transition {
    double rho_before = 0.0;
    double rho_after = 0.0;
    std::vector<double> prices;                // per producer, at sampling time
    std::vector<std::vector<double>> bundles;  // [trainer][producer]
    std::vector<double> shaped_rewards;        // per trainer
};

// Bounded FIFO store of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return items_.at(i); }

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

// Linear state value on the features (1, rho, mean price, rho^2); the
// quadratic term tracks the curvature of the collapse channel.
struct CriticParams {
    std::array<double, 4> weights{0.0, 0.0, 0.0, 0.0};
    double value(double rho, double mean_price) const;
};

// Semi-gradient temporal-difference step for one trainer's critic over a
// stored batch; TD errors are computed with the incoming weights and the
// averaged update applied once.
CriticParams td_update(const CriticParams& critic, std::span<const Transition> batch,
                       std::size_t trainer, double discount, double lr);

// Factored softmax policy over the per-producer quantity grid: one logit row
// per producer, independent level choice per coordinate. A per-trainer
// shadow price on total units enforces the bundle-capacity cap in
// expectation.
struct BundlePolicy {
    std::vector<std::vector<double>> logits;  // [producer][level]
    double temperature = 0.03;
};

// Numerically stable softmax; output sums to 1.
std::vector<double> softmax_row(std::span<const double> logits);

// r - beta * W2(q_next, q_prev): penalizes generative movement between
// consecutive generations.
double reward_shaping(double raw_reward, const meanfield::GaussianMeasure& q_next,
                      const meanfield::GaussianMeasure& q_prev, double beta);

// One pricing move: with probability epsilon a uniform jump within +/-10% of
// the current price, otherwise two-sided finite-difference ascent of `income`
// with probe width 1e-3 * max(price, 1). Result clamped at zero. Draws from
// rng only when epsilon > 0 (one branch uniform, plus one jump uniform).
double price_step(double price, const std::function<double(double)>& income,
                  double lr, double epsilon, Rng& rng);

// Structural collapse decrement per retraining generation:
// (human_slope + synth_slope) * rho^2. The accumulated decrements multiply
// realized quality as exp(-sum); with the default slopes the decay rate is
// 0.183 per unit of t * rho^2.
double collapse_decrement(double rho, const market::ElasticitySchedule& sched);

struct PmirConfig {
    int n_producers = 1024;
    int m_trainers = 16;
    int horizon = 10;
    double discount = 0.99;
    double learning_rate = 3e-4;
    double beta_shape = 0.10;
    double epsilon_explore = 0.05;
    std::uint64_t seed = 17;

    int grid_levels = 5;
    double max_quantity = 1.0;
    // Auto rule: any nonpositive value resolves to n_producers * max_quantity / 2
    // (half of grid capacity), so the cap binds and data sources substitute.
    double bundle_cap = -1.0;
    double initial_price = 0.02;
    double initial_supply = 1.0;
    double royalty = 0.10;
    double supply_adjust_rate = 0.85;  // demand-tracking blend per generation
    double reinvest_rate = 0.1;        // capacity share reallocated to income
    double temperature = 0.03;
    double labor = 1.0;
    double capital = 1.0;
    double revenue_weight = 1.0;
    // Licensing window, in generations, over which the rights market prices
    // the collapse damage a marginal human unit averts.  The premium scales
    // with beta_shape, so it vanishes in the reduction regimes.
    double rights_window = 10.0;
    double quality_price = 2.5;
    int buffer_capacity = 256;
    int critic_batch = 32;

    // Drift probe.
    double q0_mean = 1.0;
    double q0_std = 1.5;
    double target_mean = 0.0;
    double target_std = 1.0;
    double flow_step_size = 0.01;
    int flow_steps_per_gen = 1;
    bool empirical_w2 = false;
    int drift_samples = 512;

    double forced_rho = -1.0;  // in [0, 1] pins the provenance mix; < 0 endogenous
    Regime regime = Regime::pmir;

    double effective_bundle_cap() const;
    void validate() const;  // throws std::invalid_argument
};

struct GenerationRow {
    int t = 0;
    double rho = 0.0;
    double mean_quality = 0.0;
    double quality_rel = 1.0;  // mean quality relative to generation 0
    double w2_drift = 0.0;     // distance of the generative state to the target
    double w_prod = 0.0;
    double w_cons = 0.0;
    double l_coll = 0.0;
    double l_info = 0.0;
    double welfare_total = 0.0;
    double residual = 0.0;
};

struct RunRecord {
    std::uint64_t config_fingerprint = 0;
    std::string policy = "none";
    std::uint64_t seed = 0;
    std::vector<GenerationRow> rows;
};

// Canonical text form, 17 significant digits per value; used for byte-level
// determinism checks.
std::string serialize_record(const RunRecord& record);

std::vector<double> residual_trace(const RunRecord& record);

// Runs one full market-training trajectory: horizon + 1 generations
// (t = 0 is the pre-collapse baseline row). Deterministic for a given config.
RunRecord pmir_run(const PmirConfig& config, const market::ElasticitySchedule& sched,
                   const welfare::PolicyConfig& policy);

}  // namespace sdce::pmir
