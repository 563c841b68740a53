#include "sdce/market.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sdce::market {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

void check_producer(const ProducerState& p) {
    require(std::isfinite(p.provenance) && p.provenance >= 0.0 && p.provenance <= 1.0,
            "producer provenance must lie in [0, 1]");
    require(std::isfinite(p.volume) && p.volume >= 0.0, "producer volume must be >= 0");
    require(std::isfinite(p.price) && p.price >= 0.0, "producer price must be >= 0");
}

void check_rho(double rho) {
    require(std::isfinite(rho) && rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
}

}  // namespace

ElasticitySchedule::ElasticitySchedule(double scale, double labor_exp, double capital_exp,
                                       double human_base, double human_slope,
                                       double synth_base, double synth_slope)
    : scale_(scale),
      labor_exp_(labor_exp),
      capital_exp_(capital_exp),
      human_base_(human_base),
      human_slope_(human_slope),
      synth_base_(synth_base),
      synth_slope_(synth_slope) {
    require(std::isfinite(scale) && scale > 0.0, "schedule scale must be > 0");
    require(std::isfinite(labor_exp) && labor_exp >= 0.0, "labor exponent must be >= 0");
    require(std::isfinite(capital_exp) && capital_exp >= 0.0, "capital exponent must be >= 0");
    require(std::isfinite(human_base) && human_base >= 0.0, "human base elasticity must be >= 0");
    require(std::isfinite(human_slope) && human_slope >= 0.0, "human slope must be >= 0");
    require(std::isfinite(synth_base) && synth_base >= 0.0, "synth base elasticity must be >= 0");
    require(std::isfinite(synth_slope) && synth_slope >= 0.0, "synth slope must be >= 0");
    // Affine pieces are monotone, so the endpoint checks bound the budget on
    // all of [0, 1] (the synth floor only lowers the sum further).
    for (double rho : {0.0, 1.0}) {
        const double total = labor_exp_ + capital_exp_ + human(rho) + synth(rho);
        require(total <= 1.0 + 1e-12, "exponent budget exceeds 1 at an endpoint");
    }
}

double ElasticitySchedule::human(double rho) const {
    check_rho(rho);
    return human_base_ + human_slope_ * rho;
}

double ElasticitySchedule::synth(double rho) const {
    check_rho(rho);
    const double d = synth_base_ - synth_slope_ * rho;
    return d > 0.0 ? d : 0.0;
}

double contamination_ratio(std::span<const ProducerState> producers) {
    double total = 0.0;
    double human = 0.0;
    for (const auto& p : producers) {
        check_producer(p);
        total += p.volume;
        human += p.volume * p.provenance;
    }
    if (!(total > 0.0))
        throw std::domain_error("contamination ratio undefined: total volume is not positive");
    double rho = 1.0 - human / total;
    // Guard the exact-arithmetic edges only; anything further out is a bug.
    if (rho < 0.0 && rho > -1e-12) rho = 0.0;
    if (rho > 1.0 && rho < 1.0 + 1e-12) rho = 1.0;
    check_rho(rho);
    return rho;
}

std::pair<double, double> human_synth_split(std::span<const double> bundle,
                                            std::span<const ProducerState> producers) {
    if (bundle.size() != producers.size())
        throw std::invalid_argument("bundle length does not match producer count");
    double human = 0.0;
    double synth = 0.0;
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        require(std::isfinite(bundle[i]) && bundle[i] >= 0.0, "bundle entries must be >= 0");
        check_producer(producers[i]);
        human += bundle[i] * producers[i].provenance;
        synth += bundle[i] * (1.0 - producers[i].provenance);
    }
    return {human, synth};
}

double production_quality(const TrainerState& trainer, double human_units,
                          double synth_units, double rho,
                          const ElasticitySchedule& sched) {
    require(std::isfinite(human_units) && human_units >= 0.0, "human units must be >= 0");
    require(std::isfinite(synth_units) && synth_units >= 0.0, "synth units must be >= 0");
    require(std::isfinite(trainer.labor) && trainer.labor >= 0.0, "labor must be >= 0");
    require(std::isfinite(trainer.capital) && trainer.capital >= 0.0, "capital must be >= 0");
    check_rho(rho);
    // std::pow already follows the required conventions: pow(0, 0) = 1 and
    // pow(0, x) = 0 for x > 0.
    return sched.scale() * std::pow(trainer.labor, sched.labor_exp()) *
           std::pow(trainer.capital, sched.capital_exp()) *
           std::pow(human_units, sched.human(rho)) *
           std::pow(synth_units, sched.synth(rho));
}

double trainer_stage_payoff(const TrainerState& trainer,
                            std::span<const ProducerState> producers, double rho,
                            const ElasticitySchedule& sched, double subsidy,
                            double quality_scale) {
    const auto [human, synth] = human_synth_split(trainer.bundle, producers);
    const double q = production_quality(trainer, human, synth, rho, sched);
    double payments = 0.0;
    for (std::size_t i = 0; i < producers.size(); ++i)
        payments += producers[i].price * trainer.bundle[i];
    return trainer.quality_price * quality_scale * q - payments + subsidy * human;
}

std::vector<double> shapley_compensation(const MarketState& m,
                                         const ElasticitySchedule& sched) {
    const std::size_t n = m.producers.size();
    std::vector<double> out(n, 0.0);
    for (const auto& t : m.trainers) {
        const auto [human, synth] = human_synth_split(t.bundle, m.producers);
        const double full = production_quality(t, human, synth, m.rho, sched);
        for (std::size_t i = 0; i < n; ++i) {
            if (t.bundle[i] == 0.0) continue;  // null players drop out exactly
            const double h = human - t.bundle[i] * m.producers[i].provenance;
            const double s = synth - t.bundle[i] * (1.0 - m.producers[i].provenance);
            const double without =
                production_quality(t, h > 0.0 ? h : 0.0, s > 0.0 ? s : 0.0, m.rho, sched);
            out[i] += t.revenue_weight * (full - without);
        }
    }
    return out;
}

double clearing_residual(const MarketState& m, std::span<const double> target_supplies) {
    if (target_supplies.size() != m.producers.size())
        throw std::invalid_argument("target supply length does not match producer count");
    double worst = 0.0;
    for (std::size_t i = 0; i < target_supplies.size(); ++i) {
        double demand = 0.0;
        for (const auto& t : m.trainers) {
            if (t.bundle.size() != m.producers.size())
                throw std::invalid_argument("trainer bundle length does not match producer count");
            demand += t.bundle[i];
        }
        const double gap = std::fabs(demand - target_supplies[i]);
        if (gap > worst) worst = gap;
    }
    return worst;
}

double epsilon_sdce_residual(const MarketState& m, const ElasticitySchedule& sched,
                             std::span<const double> deviation_levels,
                             double subsidy, double quality_scale, double bundle_cap) {
    double best_gain = 0.0;
    for (const auto& t : m.trainers) {
        const auto [human, synth] = human_synth_split(t.bundle, m.producers);
        const double total_units = human + synth;
        const double base_q = production_quality(t, human, synth, m.rho, sched);
        double payments = 0.0;
        for (std::size_t i = 0; i < m.producers.size(); ++i)
            payments += m.producers[i].price * t.bundle[i];
        const double base =
            t.quality_price * quality_scale * base_q - payments + subsidy * human;
        for (std::size_t i = 0; i < m.producers.size(); ++i) {
            const double phi = m.producers[i].provenance;
            for (double level : deviation_levels) {
                require(std::isfinite(level) && level >= 0.0, "deviation levels must be >= 0");
                if (level == t.bundle[i]) continue;
                if (total_units + (level - t.bundle[i]) > bundle_cap + 1e-9) continue;
                const double dh = (level - t.bundle[i]) * phi;
                const double ds = (level - t.bundle[i]) * (1.0 - phi);
                double h2 = human + dh;
                double s2 = synth + ds;
                if (h2 < 0.0) h2 = 0.0;
                if (s2 < 0.0) s2 = 0.0;
                const double q2 = production_quality(t, h2, s2, m.rho, sched);
                const double alt = t.quality_price * quality_scale * q2 -
                                   (payments + m.producers[i].price * (level - t.bundle[i])) +
                                   subsidy * h2;
                const double gain = alt - base;
                if (gain > best_gain) best_gain = gain;
            }
        }
    }
    std::vector<double> targets(m.producers.size());
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = m.producers[i].volume;
    const double clearing = clearing_residual(m, targets);
    return clearing > best_gain ? clearing : best_gain;
}

}  // namespace sdce::market
