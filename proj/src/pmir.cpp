#include "sdce/pmir.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <utility>

namespace sdce::pmir {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

std::vector<double> make_levels(int grid_levels, double max_quantity) {
    std::vector<double> levels(static_cast<std::size_t>(grid_levels));
    for (int l = 0; l < grid_levels; ++l)
        levels[static_cast<std::size_t>(l)] =
            max_quantity * static_cast<double>(l) / static_cast<double>(grid_levels - 1);
    return levels;
}

void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

}  // namespace

Regime parse_regime(const std::string& name) {
    if (name == "pmir") return Regime::pmir;
    if (name == "b1") return Regime::b1;
    if (name == "b2") return Regime::b2;
    if (name == "b3") return Regime::b3;
    throw std::invalid_argument("unknown regime: " + name);
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::pmir: return "pmir";
        case Regime::b1: return "b1";
        case Regime::b2: return "b2";
        case Regime::b3: return "b3";
    }
    throw std::logic_error("unhandled regime");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
}

double CriticParams::value(double rho, double mean_price) const {
    return weights[0] + weights[1] * rho + weights[2] * mean_price + weights[3] * rho * rho;
}

CriticParams td_update(const CriticParams& critic, std::span<const Transition> batch,
                       std::size_t trainer, double discount, double lr) {
    require(std::isfinite(discount) && discount >= 0.0 && discount < 1.0,
            "discount must lie in [0, 1)");
    require(std::isfinite(lr) && lr >= 0.0, "learning rate must be >= 0");
    CriticParams out = critic;
    if (batch.empty() || lr == 0.0) return out;

    std::array<double, 4> grad{0.0, 0.0, 0.0, 0.0};
    for (const auto& tr : batch) {
        require(trainer < tr.shaped_rewards.size(), "trainer index out of range for batch");
        double mean_price = 0.0;
        if (!tr.prices.empty()) {
            for (double p : tr.prices) mean_price += p;
            mean_price /= static_cast<double>(tr.prices.size());
        }
        const std::array<double, 4> x{1.0, tr.rho_before, mean_price,
                                      tr.rho_before * tr.rho_before};
        const std::array<double, 4> xn{1.0, tr.rho_after, mean_price,
                                       tr.rho_after * tr.rho_after};
        double v = 0.0, vn = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            v += critic.weights[k] * x[k];
            vn += critic.weights[k] * xn[k];
        }
        const double delta = tr.shaped_rewards[trainer] + discount * vn - v;
        for (std::size_t k = 0; k < 4; ++k) grad[k] += delta * x[k];
    }
    const double scale = lr / static_cast<double>(batch.size());
    for (std::size_t k = 0; k < 4; ++k) out.weights[k] = critic.weights[k] + scale * grad[k];
    return out;
}

std::vector<double> softmax_row(std::span<const double> logits) {
    require(!logits.empty(), "softmax needs at least one entry");
    double mx = logits[0];
    for (double v : logits) {
        require(std::isfinite(v), "softmax logits must be finite");
        if (v > mx) mx = v;
    }
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    return out;
}

double reward_shaping(double raw_reward, const meanfield::GaussianMeasure& q_next,
                      const meanfield::GaussianMeasure& q_prev, double beta) {
    require(std::isfinite(beta) && beta >= 0.0, "shaping weight must be >= 0");
    return raw_reward - beta * meanfield::w2_gaussian(q_next, q_prev);
}

double price_step(double price, const std::function<double(double)>& income,
                  double lr, double epsilon, Rng& rng) {
    require(std::isfinite(price) && price >= 0.0, "price must be >= 0");
    require(std::isfinite(lr) && lr >= 0.0, "learning rate must be >= 0");
    require(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon < 1.0,
            "exploration rate must lie in [0, 1)");
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
        const double jump = rng.uniform(-0.10, 0.10);
        const double p = price * (1.0 + jump);
        return p > 0.0 ? p : 0.0;
    }
    const double h = 1e-3 * std::max(price, 1.0);
    const double lo = price - h > 0.0 ? price - h : 0.0;
    const double hi = price + h;
    const double grad = (income(hi) - income(lo)) / (hi - lo);
    const double p = price + lr * grad;
    return p > 0.0 ? p : 0.0;
}

double collapse_decrement(double rho, const market::ElasticitySchedule& sched) {
    require(std::isfinite(rho) && rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
    return (sched.human_slope() + sched.synth_slope()) * rho * rho;
}

double PmirConfig::effective_bundle_cap() const {
    if (bundle_cap > 0.0) return bundle_cap;
    return static_cast<double>(n_producers) * max_quantity / 2.0;
}

void PmirConfig::validate() const {
    require(n_producers >= 1, "need at least one producer");
    require(m_trainers >= 1, "need at least one trainer");
    require(horizon >= 1, "horizon must be >= 1");
    require(std::isfinite(discount) && discount > 0.0 && discount < 1.0,
            "discount must lie in (0, 1)");
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning rate must be > 0");
    require(std::isfinite(beta_shape) && beta_shape >= 0.0, "shaping weight must be >= 0");
    require(std::isfinite(epsilon_explore) && epsilon_explore >= 0.0 && epsilon_explore < 1.0,
            "exploration rate must lie in [0, 1)");
    require(grid_levels >= 2, "bundle grid needs at least two levels");
    require(std::isfinite(max_quantity) && max_quantity > 0.0, "max quantity must be > 0");
    require(std::isfinite(bundle_cap), "bundle cap must be finite");
    require(std::isfinite(initial_price) && initial_price >= 0.0, "initial price must be >= 0");
    require(std::isfinite(initial_supply) && initial_supply > 0.0, "initial supply must be > 0");
    require(std::isfinite(royalty) && royalty >= 0.0, "royalty must be >= 0");
    require(std::isfinite(supply_adjust_rate) && supply_adjust_rate >= 0.0 &&
                supply_adjust_rate <= 1.0,
            "supply adjustment rate must lie in [0, 1]");
    require(std::isfinite(reinvest_rate) && reinvest_rate >= 0.0 && reinvest_rate <= 1.0,
            "reinvestment rate must lie in [0, 1]");
    require(std::isfinite(temperature) && temperature > 0.0, "temperature must be > 0");
    require(std::isfinite(labor) && labor >= 0.0, "labor must be >= 0");
    require(std::isfinite(capital) && capital >= 0.0, "capital must be >= 0");
    require(std::isfinite(revenue_weight) && revenue_weight >= 0.0,
            "revenue weight must be >= 0");
    require(std::isfinite(rights_window) && rights_window >= 0.0,
            "rights window must be >= 0");
    require(std::isfinite(quality_price) && quality_price >= 0.0,
            "quality price must be >= 0");
    require(buffer_capacity >= 1, "replay capacity must be >= 1");
    require(critic_batch >= 1, "critic batch must be >= 1");
    require(std::isfinite(q0_std) && q0_std > 0.0, "drift start spread must be > 0");
    require(std::isfinite(target_std) && target_std > 0.0, "target spread must be > 0");
    require(std::isfinite(flow_step_size) && flow_step_size > 0.0, "flow step must be > 0");
    require(flow_steps_per_gen >= 1, "flow steps per generation must be >= 1");
    require(drift_samples >= 2, "drift sample count must be >= 2");
    require(forced_rho < 0.0 || (forced_rho >= 0.0 && forced_rho <= 1.0),
            "forced rho must lie in [0, 1] or be negative for endogenous mode");
}

namespace {

// Conditioned policy of one trainer for one generation: logits add the
// learned residual theta to a myopic stage-payoff estimate of each
// (producer, level) cell with the other coordinates held at their current
// policy means, minus a shadow price mu on units that holds the expected
// bundle total at or under the capacity cap. Two Gauss-Seidel passes make
// the fixed point deterministic.
struct ConditionedPolicy {
    std::vector<std::vector<double>> probs;  // [producer][level]
    std::vector<double> expected;            // per-producer expected quantity
    double mu = 0.0;                         // solved capacity shadow price
};

struct PayoffEnv {
    double rho_eff = 0.0;
    double subsidy = 0.0;
    double fidelity = 1.0;
};

// Cobb-Douglas evaluation with the trainer-constant factor precomputed.
struct QualityKernel {
    double base = 1.0;  // A * L^alpha * K^beta
    double eh = 0.0;    // human exponent at rho_eff
    double es = 0.0;    // synth exponent at rho_eff

    QualityKernel(const market::TrainerState& t, const market::ElasticitySchedule& sched,
                  double rho_eff)
        : base(sched.scale() * std::pow(t.labor, sched.labor_exp()) *
               std::pow(t.capital, sched.capital_exp())),
          eh(sched.human(rho_eff)),
          es(sched.synth(rho_eff)) {}

    double operator()(double h, double s) const {
        return base * std::pow(h, eh) * std::pow(s, es);
    }
};

void condition_at_mu(const market::TrainerState& trainer,
                     std::span<const market::ProducerState> producers,
                     std::span<const double> levels, const QualityKernel& qk,
                     const std::vector<std::vector<double>>& theta,
                     const PayoffEnv& env, double temperature, double mu,
                     std::vector<double>& mean, ConditionedPolicy& cp) {
    const std::size_t n = producers.size();
    const std::size_t nl = levels.size();
    std::vector<double> logits(nl, 0.0);
    for (int pass = 0; pass < 2; ++pass) {
        double human_mean = 0.0, synth_mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            human_mean += mean[i] * producers[i].provenance;
            synth_mean += mean[i] * (1.0 - producers[i].provenance);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double phi = producers[i].provenance;
            const double h_other = std::max(0.0, human_mean - mean[i] * phi);
            const double s_other = std::max(0.0, synth_mean - mean[i] * (1.0 - phi));
            for (std::size_t l = 0; l < nl; ++l) {
                const double h = h_other + levels[l] * phi;
                const double s = s_other + levels[l] * (1.0 - phi);
                const double pay = trainer.quality_price * env.fidelity * qk(h, s) -
                                   (producers[i].price + mu) * levels[l] +
                                   env.subsidy * levels[l] * phi;
                logits[l] = (theta[i][l] + pay) / temperature;
            }
            cp.probs[i] = softmax_row(logits);
            double e = 0.0;
            for (std::size_t l = 0; l < nl; ++l) e += cp.probs[i][l] * levels[l];
            human_mean += (e - mean[i]) * phi;
            synth_mean += (e - mean[i]) * (1.0 - phi);
            mean[i] = e;
        }
    }
}

ConditionedPolicy condition_policy(const market::TrainerState& trainer,
                                   std::span<const market::ProducerState> producers,
                                   std::span<const double> levels, const QualityKernel& qk,
                                   const std::vector<std::vector<double>>& theta,
                                   const std::vector<double>& base_mean,
                                   const PayoffEnv& env, double temperature,
                                   double bundle_cap) {
    const std::size_t n = producers.size();
    const std::size_t nl = levels.size();
    ConditionedPolicy cp;
    cp.probs.assign(n, std::vector<double>(nl, 0.0));

    auto total_at = [&](double mu, std::vector<double>& mean) {
        mean = base_mean;
        condition_at_mu(trainer, producers, levels, qk, theta, env, temperature, mu, mean,
                        cp);
        double total = 0.0;
        for (double e : mean) total += e;
        return total;
    };

    std::vector<double> mean;
    if (total_at(0.0, mean) <= bundle_cap) {
        cp.mu = 0.0;
        cp.expected = std::move(mean);
        return cp;
    }
    // Expected demand is strictly decreasing in mu; bracket then bisect.
    double hi = 1.0;
    for (int k = 0; k < 60 && total_at(hi, mean) > bundle_cap; ++k) hi *= 2.0;
    double lo = 0.0;
    for (int k = 0; k < 45; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (total_at(mid, mean) > bundle_cap)
            lo = mid;
        else
            hi = mid;
    }
    cp.mu = hi;  // feasible side of the bracket
    (void)total_at(hi, mean);
    cp.expected = std::move(mean);
    return cp;
}

}  // namespace

std::string serialize_record(const RunRecord& record) {
    std::string out;
    out.reserve(128 + record.rows.size() * 240);
    char head[96];
    std::snprintf(head, sizeof head, "run fp=%016llx policy=%s seed=%llu\n",
                  static_cast<unsigned long long>(record.config_fingerprint),
                  record.policy.c_str(), static_cast<unsigned long long>(record.seed));
    out += head;
    for (const auto& r : record.rows) {
        char tb[16];
        std::snprintf(tb, sizeof tb, "%d", r.t);
        out += tb;
        for (double v : {r.rho, r.mean_quality, r.quality_rel, r.w2_drift, r.w_prod,
                         r.w_cons, r.l_coll, r.l_info, r.welfare_total, r.residual}) {
            out += ',';
            append_g17(out, v);
        }
        out += '\n';
    }
    return out;
}

std::vector<double> residual_trace(const RunRecord& record) {
    std::vector<double> out;
    out.reserve(record.rows.size());
    for (const auto& r : record.rows) out.push_back(r.residual);
    return out;
}

RunRecord pmir_run(const PmirConfig& cfg, const market::ElasticitySchedule& sched,
                   const welfare::PolicyConfig& policy) {
    cfg.validate();
    const welfare::PolicyEffect effect = welfare::apply_policy(policy);
    const std::vector<double> levels = make_levels(cfg.grid_levels, cfg.max_quantity);
    const std::size_t n = static_cast<std::size_t>(cfg.n_producers);
    const std::size_t m = static_cast<std::size_t>(cfg.m_trainers);
    const std::size_t nl = levels.size();
    const double mid_level = levels[nl / 2];
    const double cap = cfg.effective_bundle_cap();
    Rng rng(cfg.seed);
    // Price exploration draws come from a split stream so the main stream
    // consumes the same sequence in every regime; paired runs then share
    // bundle sampling noise and regime contrasts stay tight under common
    // random numbers.
    Rng price_rng(split_seed(cfg.seed, 1));

    const meanfield::GaussianMeasure target{cfg.target_mean, cfg.target_std};
    meanfield::GaussianMeasure q{cfg.q0_mean, cfg.q0_std};

    const bool bundles_learn = cfg.regime != Regime::b1;
    const bool shapley_on = cfg.regime == Regime::pmir || cfg.regime == Regime::b3;
    // The clearing channel: producers track demand and move prices. Gated on
    // live exploration so that disabling it reduces the full loop to b3.
    const bool producers_active = cfg.regime == Regime::pmir && cfg.epsilon_explore > 0.0;
    const double beta = cfg.regime == Regime::pmir ? cfg.beta_shape : 0.0;

    market::MarketState mkt;
    mkt.producers.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = mkt.producers[i];
        p.id = static_cast<int>(i);
        if (cfg.forced_rho >= 0.0) {
            // Uniform provenance pins the ratio at forced_rho for any volumes.
            p.provenance = 1.0 - cfg.forced_rho;
        } else {
            p.provenance = n == 1 ? 1.0
                                  : static_cast<double>(i) / static_cast<double>(n - 1);
        }
        p.volume = cfg.initial_supply;
        switch (cfg.regime) {
            case Regime::b1: p.price = 0.0; break;
            case Regime::b2: p.price = cfg.royalty; break;
            default: p.price = cfg.initial_price; break;
        }
        if (p.price > effect.price_cap) p.price = effect.price_cap;
    }
    mkt.trainers.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        auto& t = mkt.trainers[j];
        t.id = static_cast<int>(j);
        t.bundle.assign(n, 0.0);
        t.labor = cfg.labor;
        t.capital = cfg.capital;
        t.revenue_weight = cfg.revenue_weight;
        t.quality_price = cfg.quality_price;
    }

    std::vector<std::vector<std::vector<double>>> theta(
        m, std::vector<std::vector<double>>(n, std::vector<double>(nl, 0.0)));
    std::vector<std::vector<double>> mean_bundle(m, std::vector<double>(n, mid_level));
    std::vector<CriticParams> critics(m);
    ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));

    RunRecord rec;
    rec.policy = welfare::to_string(policy.kind);
    rec.seed = cfg.seed;
    rec.rows.reserve(static_cast<std::size_t>(cfg.horizon) + 1);

    double fidelity_log = 0.0;
    double mean_q0 = -1.0;

    for (int t = 0; t <= cfg.horizon; ++t) {
        // Observe the market.
        const double rho = market::contamination_ratio(mkt.producers);
        mkt.rho = rho;
        mkt.generation = t;
        double rho_eff = effect.rho_elasticity_scale * rho;
        if (rho_eff > 1.0) rho_eff = 1.0;
        const double subsidy = effect.subsidy_rate(q, target, policy.kappa);

        // Training on this generation's corpus compounds the fidelity damage.
        fidelity_log += collapse_decrement(rho_eff, sched);
        const double fid = std::exp(-fidelity_log);

        // Rights premium: the market credits a human unit with the collapse
        // damage it averts relative to a synthetic one, priced over the
        // licensing window. Substituting one corpus unit moves rho by
        // 1 / total volume, and the per-generation log-quality damage slope
        // is (g + d) * 2 * rho. Scaled by beta_shape, so the reduction
        // regimes and the beta = 0 limit are unaffected.
        double premium = 0.0;
        if (cfg.regime == Regime::pmir && cfg.beta_shape > 0.0) {
            double volume_now = 0.0;
            for (const auto& p : mkt.producers) volume_now += p.volume;
            if (volume_now > 0.0)
                premium = cfg.beta_shape * cfg.rights_window * cfg.quality_price * fid *
                          (sched.human_slope() + sched.synth_slope()) * 2.0 * rho_eff /
                          volume_now;
        }
        const double support = subsidy + premium;

        // Bundle choice.
        const PayoffEnv env{rho_eff, support, fid};
        std::vector<ConditionedPolicy> cps(m);
        std::vector<std::vector<std::size_t>> chosen(m, std::vector<std::size_t>(n, 0));
        std::vector<QualityKernel> kernels;
        kernels.reserve(m);
        for (std::size_t j = 0; j < m; ++j) kernels.emplace_back(mkt.trainers[j], sched, rho_eff);
        for (std::size_t j = 0; j < m; ++j) {
            auto& trn = mkt.trainers[j];
            if (!bundles_learn) {
                trn.bundle.assign(n, mid_level);
                cps[j].expected.assign(n, mid_level);
                continue;
            }
            cps[j] = condition_policy(trn, mkt.producers, levels, kernels[j], theta[j],
                                      mean_bundle[j], env, cfg.temperature, cap);
            for (std::size_t i = 0; i < n; ++i) {
                const double u = rng.uniform();
                double acc = 0.0;
                std::size_t pick = nl - 1;
                for (std::size_t l = 0; l < nl; ++l) {
                    acc += cps[j].probs[i][l];
                    if (u < acc) {
                        pick = l;
                        break;
                    }
                }
                chosen[j][i] = pick;
                trn.bundle[i] = levels[pick];
            }
        }

        // Quality, rewards, compensation.
        std::vector<double> rewards(m, 0.0);
        std::vector<double> comp_recv(n, 0.0);
        double mean_quality = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const auto& trn = mkt.trainers[j];
            const auto [human, synth] = market::human_synth_split(trn.bundle, mkt.producers);
            const double cd = market::production_quality(trn, human, synth, rho_eff, sched);
            const double q_eff = cd * fid;
            mean_quality += q_eff;
            double price_paid = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                price_paid += mkt.producers[i].price * trn.bundle[i];
            double comp_paid = 0.0;
            if (shapley_on) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (trn.bundle[i] == 0.0) continue;
                    double h = human - trn.bundle[i] * mkt.producers[i].provenance;
                    double s = synth - trn.bundle[i] * (1.0 - mkt.producers[i].provenance);
                    if (h < 0.0) h = 0.0;
                    if (s < 0.0) s = 0.0;
                    const double share =
                        trn.revenue_weight * fid *
                        (cd - market::production_quality(trn, h, s, rho_eff, sched));
                    comp_paid += share;
                    comp_recv[i] += share;
                }
            }
            rewards[j] =
                trn.quality_price * q_eff - price_paid - comp_paid + support * human;
        }
        mean_quality /= static_cast<double>(m);
        if (t == 0) mean_q0 = mean_quality;
        const double quality_rel = mean_q0 > 0.0 ? mean_quality / mean_q0 : 0.0;

        // Expected and realized demand.
        std::vector<double> exp_demand(n, 0.0);
        std::vector<double> real_demand(n, 0.0);
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i < n; ++i) {
                exp_demand[i] += cps[j].expected[i];
                real_demand[i] += mkt.trainers[j].bundle[i];
            }

        if (std::getenv("SDCE_DEBUG") != nullptr) {
            std::fprintf(stderr, "t=%d sub=%.4f prem=%.4f mu=%.4f E:", t, subsidy,
                         premium, cps.empty() ? 0.0 : cps[0].mu);
            for (std::size_t i = 0; i < n; ++i) std::fprintf(stderr, " %.3f", exp_demand[i]);
            std::fprintf(stderr, " | h:");
            for (std::size_t i = 0; i < n; ++i)
                std::fprintf(stderr, " %.3f", mkt.producers[i].volume);
            std::fprintf(stderr, "\n");
        }

        // Supply response. Channel one, all compensated regimes: a share
        // reinvest_rate of total capacity is reallocated in proportion to
        // income (price revenue, Shapley shares, lump-sum transfers); total
        // volume is preserved and the fixed point is capacity proportional
        // to income. Channel two, clearing: blend toward expected demand,
        // full loop only.
        std::vector<double> new_supply(n);
        double income_sum = 0.0;
        double volume_sum = 0.0;
        std::vector<double> income(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            income[i] = mkt.producers[i].price * real_demand[i] + comp_recv[i] +
                        effect.producer_transfer;
            income_sum += income[i];
            volume_sum += mkt.producers[i].volume;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double h = mkt.producers[i].volume;
            if (cfg.reinvest_rate > 0.0 && income_sum > 0.0)
                h = (1.0 - cfg.reinvest_rate) * h +
                    cfg.reinvest_rate * (income[i] / income_sum) * volume_sum;
            if (producers_active)
                h = (1.0 - cfg.supply_adjust_rate) * h +
                    cfg.supply_adjust_rate * exp_demand[i];
            new_supply[i] = h > 1e-12 ? h : 1e-12;
        }
        double vol_total = 0.0, vol_human = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            vol_total += new_supply[i];
            vol_human += new_supply[i] * mkt.producers[i].provenance;
        }
        double rho_after = 1.0 - vol_human / vol_total;
        if (rho_after < 0.0) rho_after = 0.0;
        if (rho_after > 1.0) rho_after = 1.0;

        // Equilibrium gap at the expected bundle matrix against the supplies
        // trainers actually faced.
        market::MarketState expm = mkt;
        for (std::size_t j = 0; j < m; ++j) expm.trainers[j].bundle = cps[j].expected;
        expm.rho = rho_eff;
        const double residual =
            market::epsilon_sdce_residual(expm, sched, levels, support, fid, cap);

        // Advance the drift probe one generation (self-anchor = prior
        // generation's endpoint), mixture weight = realized contamination.
        const meanfield::GaussianMeasure q_old = q;
        for (int s = 0; s < cfg.flow_steps_per_gen; ++s)
            q = meanfield::flow_step(
                meanfield::FlowState{q, q_old, target, rho, cfg.flow_step_size});
        double w2_step;
        if (cfg.empirical_w2) {
            std::vector<double> a(static_cast<std::size_t>(cfg.drift_samples));
            std::vector<double> b(static_cast<std::size_t>(cfg.drift_samples));
            for (auto& v : a) v = q.mean + q.stddev * rng.normal();
            for (auto& v : b) v = q_old.mean + q_old.stddev * rng.normal();
            w2_step = meanfield::w2_empirical(meanfield::EmpiricalMeasure(std::move(a)),
                                              meanfield::EmpiricalMeasure(std::move(b)));
        } else {
            w2_step = meanfield::w2_gaussian(q, q_old);
        }
        const double w2_drift = meanfield::w2_gaussian(q, target);

        // Shaping, welfare (at the prices and bundles trainers faced), and
        // the stored transition.
        std::vector<double> shaped(m);
        for (std::size_t j = 0; j < m; ++j) shaped[j] = rewards[j] - beta * w2_step;

        const welfare::WelfareBreakdown wb =
            welfare::welfare_decompose(mkt, sched, q, target, policy, fid, rho_eff);

        Transition trans;
        trans.rho_before = rho;
        trans.rho_after = rho_after;
        trans.prices.resize(n);
        for (std::size_t i = 0; i < n; ++i) trans.prices[i] = mkt.producers[i].price;
        trans.bundles.resize(m);
        for (std::size_t j = 0; j < m; ++j) trans.bundles[j] = mkt.trainers[j].bundle;
        trans.shaped_rewards = shaped;
        buffer.push(std::move(trans));

        // Critic and policy updates.
        if (bundles_learn) {
            const std::size_t bs =
                std::min<std::size_t>(buffer.size(), static_cast<std::size_t>(cfg.critic_batch));
            std::vector<Transition> batch;
            batch.reserve(bs);
            for (std::size_t k = 0; k < bs; ++k)
                batch.push_back(buffer.at(rng.index(buffer.size())));
            double mean_price = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean_price += mkt.producers[i].price;
            mean_price /= static_cast<double>(n);
            for (std::size_t j = 0; j < m; ++j) {
                critics[j] = td_update(critics[j], batch, j, cfg.discount, cfg.learning_rate);
                const double baseline = critics[j].value(rho, mean_price);
                const double adv = shaped[j] - baseline;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t l = 0; l < nl; ++l)
                        theta[j][i][l] += cfg.learning_rate * adv *
                                          ((l == chosen[j][i] ? 1.0 : 0.0) - cps[j].probs[i][l]);
                mean_bundle[j] = cps[j].expected;
            }
        }

        // Producer price moves: finite-difference ascent of own income with
        // the demand response evaluated through the conditioned policies
        // (only the own coordinate's logits depend on the own price; the
        // capacity shadow prices are held at their solved values).
        if (producers_active) {
            for (std::size_t i = 0; i < n; ++i) {
                const double phi = mkt.producers[i].provenance;
                auto income_at = [&](double px) {
                    double total = 0.0;
                    std::vector<double> logits(nl);
                    for (std::size_t j = 0; j < m; ++j) {
                        const auto& trn = mkt.trainers[j];
                        double h_other = 0.0, s_other = 0.0;
                        for (std::size_t k2 = 0; k2 < n; ++k2) {
                            if (k2 == i) continue;
                            h_other += cps[j].expected[k2] * mkt.producers[k2].provenance;
                            s_other += cps[j].expected[k2] * (1.0 - mkt.producers[k2].provenance);
                        }
                        for (std::size_t l = 0; l < nl; ++l) {
                            const double h = h_other + levels[l] * phi;
                            const double s = s_other + levels[l] * (1.0 - phi);
                            const double pay =
                                trn.quality_price * fid * kernels[j](h, s) -
                                (px + cps[j].mu) * levels[l] + support * levels[l] * phi;
                            logits[l] = (theta[j][i][l] + pay) / cfg.temperature;
                        }
                        const std::vector<double> probs = softmax_row(logits);
                        double eb = 0.0;
                        for (std::size_t l = 0; l < nl; ++l) eb += probs[l] * levels[l];
                        const double h_full = h_other + eb * phi;
                        const double s_full = s_other + eb * (1.0 - phi);
                        double comp_edge = 0.0;
                        if (shapley_on)
                            comp_edge = trn.revenue_weight * fid *
                                        (kernels[j](h_full, s_full) -
                                         kernels[j](h_other, s_other));
                        total += px * eb + comp_edge;
                    }
                    return total;
                };
                double p = price_step(mkt.producers[i].price, income_at, cfg.learning_rate,
                                      cfg.epsilon_explore, price_rng);
                if (p > effect.price_cap) p = effect.price_cap;
                mkt.producers[i].price = p;
            }
        } else if (effect.price_cap < std::numeric_limits<double>::infinity()) {
            for (std::size_t i = 0; i < n; ++i)
                if (mkt.producers[i].price > effect.price_cap)
                    mkt.producers[i].price = effect.price_cap;
        }

        // Supply response takes effect next generation.
        for (std::size_t i = 0; i < n; ++i) mkt.producers[i].volume = new_supply[i];

        GenerationRow row;
        row.t = t;
        row.rho = rho;
        row.mean_quality = mean_quality;
        row.quality_rel = quality_rel;
        row.w2_drift = w2_drift;
        row.w_prod = wb.producer_surplus;
        row.w_cons = wb.consumer_surplus;
        row.l_coll = wb.collapse_loss;
        row.l_info = wb.info_loss;
        row.welfare_total = wb.total;
        row.residual = residual;
        rec.rows.push_back(row);
    }
    return rec;
}

}  // namespace sdce::pmir
