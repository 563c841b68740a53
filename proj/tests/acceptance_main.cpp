// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here, next to the checks they guard.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sdce/config.hpp"
#include "sdce/estimation.hpp"
#include "sdce/harness.hpp"
#include "sdce/market.hpp"
#include "sdce/meanfield.hpp"
#include "sdce/pmir.hpp"
#include "sdce/rng.hpp"
#include "sdce/welfare.hpp"

using namespace sdce;
using harness::CheckLine;

namespace {

int failures = 0;

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

void report(int index, const std::string& name, bool pass, double secs,
            const std::string& detail) {
    if (!pass) ++failures;
    std::printf("[%s] %d %-28s (%6.2fs)  %s\n", pass ? "PASS" : "FAIL", index,
                name.c_str(), secs, detail.c_str());
}

// A replication command passes when every one of its gates does; the gate
// details are echoed indented under the criterion line.
void report_checks(int index, const std::string& name, double secs,
                   const std::vector<CheckLine>& checks) {
    bool pass = true;
    for (const auto& c : checks) pass = pass && c.pass;
    std::string detail = fmt("%zu/%zu gates", checks.size(), checks.size());
    if (!pass) {
        std::size_t ok = 0;
        for (const auto& c : checks) ok += c.pass ? 1 : 0;
        detail = fmt("%zu/%zu gates", ok, checks.size());
    }
    report(index, name, pass, secs, detail);
    for (const auto& c : checks)
        std::printf("       | %-28s %-4s %s\n", c.name.c_str(),
                    c.pass ? "ok" : "FAIL", c.detail.c_str());
}

cfg::ExperimentConfig desk_base() {
    cfg::ExperimentConfig base = cfg::default_config();
    cfg::apply_scale(base, "desk");
    return base;
}

void criterion_contraction() {
    const double start = now_seconds();
    const meanfield::GaussianMeasure q0{2.0, 2.0};
    const meanfield::GaussianMeasure target{0.0, 1.0};

    std::vector<double> factors;
    for (double rho : {0.0, 0.3, 0.7}) {
        const auto path = meanfield::iterate_generations(q0, target, rho, 1, 6, 0.05);
        factors.push_back(meanfield::w2_gaussian(path[1], target) /
                          meanfield::w2_gaussian(path[0], target));
    }
    const bool contracting =
        factors[0] < 1.0 && factors[1] < 1.0 && factors[2] < 1.0;
    const bool monotone = factors[0] < factors[1] && factors[1] < factors[2];

    // Long-run convergence of the uncontaminated flow from a dispersed start.
    meanfield::GaussianMeasure q{0.0, 4.0};
    const meanfield::GaussianMeasure anchor = q;
    for (int i = 0; i < 500; ++i)
        q = meanfield::flow_step({q, anchor, target, 0.0, 0.01});
    const double dist = meanfield::w2_gaussian(q, target);
    const double secs = now_seconds() - start;

    const bool pass = contracting && monotone && dist < 1e-3 && secs <= 1.0;
    report(5, "drift contraction", pass, secs,
           fmt("factors %.4f < %.4f < %.4f (all < 1), W2 after 500 steps "
               "= %.2e target < 1e-3",
               factors[0], factors[1], factors[2], dist));
}

void criterion_policy_identities() {
    const double start = now_seconds();
    const meanfield::GaussianMeasure q{0.0, 0.5};
    const meanfield::GaussianMeasure p{0.0, 1.0};
    const double kappa = 0.85;

    const double kl = meanfield::kl_gaussian(q, p);
    const double kl_err = std::fabs(kl - (std::log(2.0) - 0.375));
    const double sub = welfare::optimal_subsidy(q, p, kappa);
    const double sub_err = std::fabs(sub - kl / (2.0 * kappa));
    const double wm_err = std::fabs(welfare::optimal_watermark(q, p, kappa, 0.25) -
                                    0.75 * kl / (2.0 * kappa * 0.25));
    const bool half_exact = welfare::optimal_watermark(q, p, kappa, 0.5) == sub;

    bool decreasing = true;
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= 100; ++i) {
        const double w = welfare::optimal_watermark(q, p, kappa, i / 100.0);
        if (!(w < prev)) decreasing = false;
        prev = w;
    }
    const double secs = now_seconds() - start;

    const bool pass = kl_err <= 1e-12 && sub_err <= 1e-12 && wm_err <= 1e-12 &&
                      half_exact && decreasing;
    report(6, "closed-form identities", pass, secs,
           fmt("kl err %.1e, subsidy err %.1e, watermark err %.1e (target "
               "<= 1e-12), psi=0.5 %s subsidy, 100-pt grid %s",
               kl_err, sub_err, wm_err, half_exact ? "==" : "!=",
               decreasing ? "strictly decreasing" : "NOT decreasing"));
}

void criterion_efficiency_floor() {
    const double start = now_seconds();
    const int reps = 10000;
    const int t_obs = 100;
    Rng rng(123);
    double sum = 0.0;
    double sumsq = 0.0;
    for (int r = 0; r < reps; ++r) {
        double acc = 0.0;
        for (int t = 0; t < t_obs; ++t) acc += rng.normal();
        const double mean = acc / t_obs;
        sum += mean;
        sumsq += mean * mean;
    }
    const double var = (sumsq - sum * sum / reps) / reps;
    const double floor = est::fisher_crlb(1.0, t_obs);
    const double lo = floor * (1.0 - 3.0 / std::sqrt(static_cast<double>(reps)));
    const double secs = now_seconds() - start;

    const bool pass = var >= lo && var >= 0.0097 && var <= 0.011 && secs <= 5.0;
    report(7, "estimator efficiency floor", pass, secs,
           fmt("MC var %.6f, bound %.6f, accept band [0.0097, 0.011]", var,
               floor));
}

bool hygiene_flow_gradient(std::string& note) {
    Rng rng(2026);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const meanfield::GaussianMeasure cur{rng.uniform() * 4.0 - 2.0,
                                             0.5 + 2.0 * rng.uniform()};
        // Finite differences certify the gradient only against unit-spread
        // anchors, where the drift is the exact potential gradient.
        const meanfield::FlowState s{cur,
                                     {rng.uniform() * 2.0 - 1.0, 1.0},
                                     {rng.uniform() * 2.0 - 1.0, 1.0},
                                     rng.uniform(),
                                     0.01};
        const auto g = meanfield::flow_gradient(cur, s);
        const double h = 1e-6;
        auto at = [&](double dm, double ds) {
            return meanfield::flow_potential({cur.mean + dm, cur.stddev + ds}, s);
        };
        const double fd_mean = (at(h, 0) - at(-h, 0)) / (2 * h);
        const double fd_sd = (at(0, h) - at(0, -h)) / (2 * h);
        worst = std::max(worst, std::fabs(g.d_mean - fd_mean) /
                                    std::max(1.0, std::fabs(fd_mean)));
        worst = std::max(worst, std::fabs(g.d_stddev - fd_sd) /
                                    std::max(1.0, std::fabs(fd_sd)));
    }
    note = fmt("flow gradient vs FD %.2e (<= 1e-5)", worst);
    return worst <= 1e-5;
}

bool hygiene_ols(std::string& note) {
    Rng rng(77);
    est::Dataset d;
    for (int i = 0; i < 60; ++i)
        d.rows.push_back({static_cast<double>(i), rng.uniform(),
                          0.4 + 0.2 * i + rng.normal()});
    const auto fit =
        est::ols_fit(d, [](const est::Observation& o) { return o.t; });
    double s_e = 0.0;
    double s_ex = 0.0;
    for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
        s_e += fit.residuals[i];
        s_ex += fit.residuals[i] * fit.regressor[i];
    }
    const double ortho =
        std::max(std::fabs(s_e), std::fabs(s_ex)) / d.rows.size();
    const bool ortho_ok = ortho <= 1e-9;

    // Zero truncation lag must reproduce the heteroskedasticity-only
    // sandwich, written out long-hand.
    const std::size_t n = d.rows.size();
    double sx = 0.0;
    double sxx = 0.0;
    for (double x : fit.regressor) {
        sx += x;
        sxx += x * x;
    }
    const double det = n * sxx - sx * sx;
    double meat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = (n * fit.regressor[i] - sx) / det;
        meat += a * a * fit.residuals[i] * fit.residuals[i];
    }
    const double white = std::sqrt(meat);
    const double hac0 = est::hac_se(fit, 0);
    const double hac_rel = std::fabs(hac0 - white) / white;
    note = fmt("OLS orthogonality %.2e (<= 1e-9), HAC(0) vs plain %.2e", ortho,
               hac_rel);
    return ortho_ok && hac_rel <= 1e-9;
}

bool hygiene_welfare_identity(std::string& note) {
    Rng rng(31);
    const market::ElasticitySchedule sched(1.0, 0.33, 0.25, 0.18, 0.083, 0.12,
                                           0.100);
    const welfare::PolicyConfig policy;
    const meanfield::GaussianMeasure q{0.4, 0.8};
    const meanfield::GaussianMeasure p{0.0, 1.0};
    bool exact = true;
    for (int trial = 0; trial < 20; ++trial) {
        market::MarketState m;
        for (int i = 0; i < 3; ++i)
            m.producers.push_back({i, rng.uniform(), 0.5 + rng.uniform(),
                                   0.1 * rng.uniform()});
        for (int j = 0; j < 2; ++j) {
            market::TrainerState t;
            t.id = j;
            t.bundle = {rng.uniform(), rng.uniform(), rng.uniform()};
            t.quality_price = 1.0 + rng.uniform();
            m.trainers.push_back(t);
        }
        m.rho = market::contamination_ratio(m.producers);
        const auto w = welfare::welfare_decompose(m, sched, q, p, policy);
        if (w.total != w.producer_surplus + w.consumer_surplus -
                           w.collapse_loss - w.info_loss)
            exact = false;
    }
    note = fmt("welfare identity %s over 20 random markets",
               exact ? "bit-exact" : "VIOLATED");
    return exact;
}

bool hygiene_shapley(std::string& note) {
    const market::ElasticitySchedule sched(1.0, 0.33, 0.25, 0.18, 0.083, 0.12,
                                           0.100);
    market::MarketState m;
    m.producers = {{0, 1.0, 1.0, 0.0}, {1, 1.0, 1.0, 0.0}, {2, 0.3, 1.0, 0.0}};
    market::TrainerState t;
    t.bundle = {0.7, 0.7, 0.0};  // producer 2 is a null player
    m.trainers = {t};
    m.rho = 0.0;
    const auto comp = market::shapley_compensation(m, sched);
    const bool null_ok = comp[2] == 0.0;
    const bool sym_ok = comp[0] == comp[1];
    note = fmt("compensation: null player %s, twins %s",
               null_ok ? "exactly 0" : "NONZERO",
               sym_ok ? "paid equally" : "paid unequally");
    return null_ok && sym_ok;
}

bool hygiene_determinism(std::string& note) {
    cfg::ExperimentConfig c = desk_base();
    c.run.horizon = 6;
    const auto sched = c.schedule();
    const std::string a = pmir::serialize_record(pmir::pmir_run(c.run, sched, c.policy));
    const std::string b = pmir::serialize_record(pmir::pmir_run(c.run, sched, c.policy));

    cfg::ExperimentConfig sweep = desk_base();
    sweep.run.horizon = 3;
    sweep.seeds = {17, 31};
    sweep.rho_grid = {0.3, 0.7};
    sweep.out_dir.clear();
    const std::string csv1 = harness::emit_csv(harness::run_sweep(sweep));
    sweep.workers = 2;
    const std::string csv2 = harness::emit_csv(harness::run_sweep(sweep));

    const bool ok = a == b && csv1 == csv2;
    note = fmt("repeat runs byte-identical: record %s, threaded sweep %s",
               a == b ? "yes" : "NO", csv1 == csv2 ? "yes" : "NO");
    return ok;
}

bool hygiene_tail_residual(std::string& note) {
    // Same cells as the policy replication: endogenous contamination, the
    // none and subsidy arms, the full seed panel at desk scale.
    cfg::ExperimentConfig base = desk_base();
    base.rho_grid.clear();
    base.run.horizon = 10;
    base.run.regime = pmir::Regime::pmir;
    std::vector<double> cell_means;
    for (const char* policy : {"none", "subsidy"}) {
        for (std::uint64_t seed : base.seeds) {
            harness::SweepCell cell;
            cell.run_id = "tail";
            cell.forced_rho = -1.0;
            cell.policy = policy;
            cell.panel_seed = seed;
            cell.cell_seed = split_seed(seed, 0);
            const auto rec = harness::run_cell(base, cell);
            const auto& rows = rec.rows;
            double acc = 0.0;
            for (std::size_t k = rows.size() - 3; k < rows.size(); ++k)
                acc += rows[k].residual;
            cell_means.push_back(acc / 3.0);
        }
    }
    const double med = harness::median(cell_means);
    note = fmt("median tail residual %.4f (<= 0.05)", med);
    return med <= 0.05;
}

void criterion_hygiene() {
    const double start = now_seconds();
    std::vector<CheckLine> checks;
    auto add = [&](const char* name, bool (*fn)(std::string&)) {
        std::string detail;
        const bool ok = fn(detail);
        checks.push_back({name, ok, detail});
    };
    add("hygiene.flow_gradient", hygiene_flow_gradient);
    add("hygiene.ols", hygiene_ols);
    add("hygiene.welfare_identity", hygiene_welfare_identity);
    add("hygiene.compensation", hygiene_shapley);
    add("hygiene.determinism", hygiene_determinism);
    add("hygiene.tail_residual", hygiene_tail_residual);
    report_checks(8, "numerical hygiene", now_seconds() - start, checks);
}

}  // namespace

int main() {
    std::printf("acceptance gate\n");

    {
        const double t0 = now_seconds();
        auto checks = harness::replicate_scaling(desk_base());
        report_checks(1, "collapse scaling", now_seconds() - t0, checks);
    }
    {
        const double t0 = now_seconds();
        auto checks = harness::replicate_reduced_form(desk_base());
        report_checks(2, "reduced-form recovery", now_seconds() - t0, checks);
    }
    {
        const double t0 = now_seconds();
        auto checks = harness::replicate_policies(desk_base());
        report_checks(3, "policy interventions", now_seconds() - t0, checks);
    }
    {
        const double t0 = now_seconds();
        auto checks = harness::replicate_regimes(desk_base());
        report_checks(4, "compensation regimes", now_seconds() - t0, checks);
    }
    criterion_contraction();
    criterion_policy_identities();
    criterion_efficiency_floor();
    criterion_hygiene();

    std::printf("%s: %d criterion(s) failed\n", failures == 0 ? "OK" : "FAILED",
                failures);
    return failures == 0 ? 0 : 1;
}
