#pragma once

#include <limits>
#include <string>

#include "sdce/market.hpp"
#include "sdce/meanfield.hpp"

namespace sdce::welfare {

enum class PolicyKind { none, subsidy, disclosure, royalty_cap, transfer, watermark };

// Throws std::invalid_argument on an unknown name.
PolicyKind parse_policy_kind(const std::string& name);
std::string to_string(PolicyKind kind);

struct PolicyConfig {
    PolicyKind kind = PolicyKind::none;
    double kappa = 0.85;                // collapse-loss weight
    double lambda_pen = 0.30;           // information-loss weight
    double psi = 0.5;                   // watermark pass-through, in (0, 1]
    double price_cap = 0.10;            // royalty-cap clamp
    double transfer = 0.05;             // lump sum per producer
    double disclosure_rho_scale = 0.68; // effective-rho multiplier
};

struct WelfareBreakdown {
    double producer_surplus = 0.0;
    double consumer_surplus = 0.0;
    double collapse_loss = 0.0;
    double info_loss = 0.0;
    double total = 0.0;  // producer + consumer - collapse - info, computed literally
};

// kappa * KL(q || p).
double collapse_loss(const meanfield::GaussianMeasure& q,
                     const meanfield::GaussianMeasure& p, double kappa);

// lambda * rho * (1 - rho).
double info_loss(double rho, double lambda);

// Accounting split in which payments cancel in the total:
// producer surplus = price revenue + compensation received,
// consumer surplus = quality revenue - price payments - compensation paid.
// Planner-funded transfers (subsidy, lump sums) are excluded; they act on
// incentives, not on the measured surplus. quality_scale multiplies realized
// quality. effective_rho, when in [0, 1], replaces m.rho inside the
// production/compensation terms (disclosure); the information loss always
// uses m.rho.
WelfareBreakdown welfare_decompose(const market::MarketState& m,
                                   const market::ElasticitySchedule& sched,
                                   const meanfield::GaussianMeasure& q,
                                   const meanfield::GaussianMeasure& p,
                                   const PolicyConfig& policy,
                                   double quality_scale = 1.0,
                                   double effective_rho = -1.0);

// Marginal-damage subsidy: KL(q || p) / (2 kappa).
double optimal_subsidy(const meanfield::GaussianMeasure& q,
                       const meanfield::GaussianMeasure& p, double kappa);

// Watermark premium at pass-through psi: (1 - psi) KL(q || p) / (2 kappa psi).
// Equals the subsidy at psi = 1/2.
double optimal_watermark(const meanfield::GaussianMeasure& q,
                         const meanfield::GaussianMeasure& p, double kappa,
                         double psi);

// Per-generation knobs the training loop applies for a policy.
struct PolicyEffect {
    enum class Subsidy { none, pigouvian, watermark };
    double rho_elasticity_scale = 1.0;
    double price_cap = std::numeric_limits<double>::infinity();
    double producer_transfer = 0.0;
    Subsidy subsidy = Subsidy::none;
    double psi = 1.0;

    // Per-unit subsidy rate for the current drift state; zero for non-subsidy
    // kinds. The watermark channel pays psi * premium per human unit.
    double subsidy_rate(const meanfield::GaussianMeasure& q,
                        const meanfield::GaussianMeasure& p, double kappa) const;
};

PolicyEffect apply_policy(const PolicyConfig& policy);

}  // namespace sdce::welfare
