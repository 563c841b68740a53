#include "sdce/welfare.hpp"

#include <cmath>
#include <stdexcept>

namespace sdce::welfare {

PolicyKind parse_policy_kind(const std::string& name) {
    if (name == "none") return PolicyKind::none;
    if (name == "subsidy") return PolicyKind::subsidy;
    if (name == "disclosure") return PolicyKind::disclosure;
    if (name == "royalty_cap") return PolicyKind::royalty_cap;
    if (name == "transfer") return PolicyKind::transfer;
    if (name == "watermark") return PolicyKind::watermark;
    throw std::invalid_argument("unknown policy kind: " + name);
}

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::none: return "none";
        case PolicyKind::subsidy: return "subsidy";
        case PolicyKind::disclosure: return "disclosure";
        case PolicyKind::royalty_cap: return "royalty_cap";
        case PolicyKind::transfer: return "transfer";
        case PolicyKind::watermark: return "watermark";
    }
    throw std::logic_error("unhandled policy kind");
}

double collapse_loss(const meanfield::GaussianMeasure& q,
                     const meanfield::GaussianMeasure& p, double kappa) {
    if (!std::isfinite(kappa) || kappa < 0.0)
        throw std::invalid_argument("collapse weight must be >= 0");
    return kappa * meanfield::kl_gaussian(q, p);
}

double info_loss(double rho, double lambda) {
    if (!std::isfinite(rho) || rho < 0.0 || rho > 1.0)
        throw std::invalid_argument("rho must lie in [0, 1]");
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw std::invalid_argument("information-loss weight must be >= 0");
    return lambda * rho * (1.0 - rho);
}

WelfareBreakdown welfare_decompose(const market::MarketState& m,
                                   const market::ElasticitySchedule& sched,
                                   const meanfield::GaussianMeasure& q,
                                   const meanfield::GaussianMeasure& p,
                                   const PolicyConfig& policy,
                                   double quality_scale,
                                   double effective_rho) {
    const double rho_prod =
        (effective_rho >= 0.0 && effective_rho <= 1.0) ? effective_rho : m.rho;

    WelfareBreakdown w;
    // Producer side: price revenue at realized demand plus compensation.
    std::vector<double> demand(m.producers.size(), 0.0);
    for (const auto& t : m.trainers) {
        if (t.bundle.size() != m.producers.size())
            throw std::invalid_argument("trainer bundle length does not match producer count");
        for (std::size_t i = 0; i < demand.size(); ++i) demand[i] += t.bundle[i];
    }

    market::MarketState prod_view = m;
    prod_view.rho = rho_prod;
    const std::vector<double> comp = market::shapley_compensation(prod_view, sched);

    for (std::size_t i = 0; i < m.producers.size(); ++i)
        w.producer_surplus += m.producers[i].price * demand[i] + quality_scale * comp[i];

    // Consumer side: quality revenue net of price payments and compensation
    // paid. Compensation paid by trainer j is recomputed per trainer so the
    // two sides cancel exactly in the total.
    for (const auto& t : m.trainers) {
        const auto [human, synth] = market::human_synth_split(t.bundle, m.producers);
        const double qual =
            market::production_quality(t, human, synth, rho_prod, sched);
        double price_paid = 0.0;
        for (std::size_t i = 0; i < m.producers.size(); ++i)
            price_paid += m.producers[i].price * t.bundle[i];
        double comp_paid = 0.0;
        for (std::size_t i = 0; i < m.producers.size(); ++i) {
            if (t.bundle[i] == 0.0) continue;
            double h = human - t.bundle[i] * m.producers[i].provenance;
            double s = synth - t.bundle[i] * (1.0 - m.producers[i].provenance);
            if (h < 0.0) h = 0.0;
            if (s < 0.0) s = 0.0;
            comp_paid += t.revenue_weight *
                         (qual - market::production_quality(t, h, s, rho_prod, sched));
        }
        w.consumer_surplus +=
            t.quality_price * quality_scale * qual - price_paid - quality_scale * comp_paid;
    }

    w.collapse_loss = collapse_loss(q, p, policy.kappa);
    w.info_loss = info_loss(m.rho, policy.lambda_pen);
    w.total = w.producer_surplus + w.consumer_surplus - w.collapse_loss - w.info_loss;
    return w;
}

double optimal_subsidy(const meanfield::GaussianMeasure& q,
                       const meanfield::GaussianMeasure& p, double kappa) {
    if (!std::isfinite(kappa) || kappa <= 0.0)
        throw std::invalid_argument("collapse weight must be > 0");
    return meanfield::kl_gaussian(q, p) / (2.0 * kappa);
}

double optimal_watermark(const meanfield::GaussianMeasure& q,
                         const meanfield::GaussianMeasure& p, double kappa,
                         double psi) {
    if (!std::isfinite(kappa) || kappa <= 0.0)
        throw std::invalid_argument("collapse weight must be > 0");
    if (!std::isfinite(psi) || psi <= 0.0 || psi > 1.0)
        throw std::invalid_argument("pass-through psi must lie in (0, 1]");
    return (1.0 - psi) * meanfield::kl_gaussian(q, p) / (2.0 * kappa * psi);
}

double PolicyEffect::subsidy_rate(const meanfield::GaussianMeasure& q,
                                  const meanfield::GaussianMeasure& p,
                                  double kappa) const {
    switch (subsidy) {
        case Subsidy::none: return 0.0;
        case Subsidy::pigouvian: return optimal_subsidy(q, p, kappa);
        case Subsidy::watermark: return psi * optimal_watermark(q, p, kappa, psi);
    }
    throw std::logic_error("unhandled subsidy mode");
}

PolicyEffect apply_policy(const PolicyConfig& policy) {
    PolicyEffect e;
    switch (policy.kind) {
        case PolicyKind::none:
            break;
        case PolicyKind::subsidy:
            e.subsidy = PolicyEffect::Subsidy::pigouvian;
            break;
        case PolicyKind::disclosure:
            if (policy.disclosure_rho_scale < 0.0 || policy.disclosure_rho_scale > 1.0)
                throw std::invalid_argument("disclosure scale must lie in [0, 1]");
            e.rho_elasticity_scale = policy.disclosure_rho_scale;
            break;
        case PolicyKind::royalty_cap:
            if (!(policy.price_cap >= 0.0))
                throw std::invalid_argument("price cap must be >= 0");
            e.price_cap = policy.price_cap;
            break;
        case PolicyKind::transfer:
            if (!(policy.transfer >= 0.0))
                throw std::invalid_argument("transfer must be >= 0");
            e.producer_transfer = policy.transfer;
            break;
        case PolicyKind::watermark:
            if (!(policy.psi > 0.0 && policy.psi <= 1.0))
                throw std::invalid_argument("pass-through psi must lie in (0, 1]");
            e.subsidy = PolicyEffect::Subsidy::watermark;
            e.psi = policy.psi;
            break;
    }
    return e;
}

}  // namespace sdce::welfare
