#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sdce::est {

// One panel cell: generation index, contamination level, measured outcome
// (log perplexity, or a relative-quality ratio for the scaling fit).
struct Observation {
    double t = 0.0;
    double rho = 0.0;
    double outcome = 0.0;
};

struct Dataset {
    std::vector<Observation> rows;
};

// Pools the panel into the (rho, t) order used for the lag structure.
void sort_for_hac(Dataset& data);

struct FitResult {
    double intercept = 0.0;
    double slope = 0.0;       // coefficient on the regressor (sign convention per fit)
    double se_hac = 0.0;      // filled by the HAC pipeline; 0 until then
    double r_squared = 0.0;   // 0 by convention when the outcome has no variance
    bool zero_variance = false;
    int lag_used = 0;
    std::vector<double> regressor;  // design column actually used
    std::vector<double> residuals;
};

// Two-parameter least squares of outcome on regressor(row) with intercept.
FitResult ols_fit(const Dataset& data,
                  const std::function<double(const Observation&)>& regressor);

// Truncation lag floor(4 (n/100)^{2/9}).
int auto_lag(std::size_t n);

// Kernel-weighted long-run standard error for the slope, Bartlett weights
// w_l = 1 - l/(lag+1), full two-regressor sandwich. lag = 0 reproduces the
// heteroskedasticity-only estimator exactly. Requires a fit produced from the
// same data (its stored regressor and residuals are used).
double hac_se(const FitResult& fit, int lag);

// Pools by (rho, t), regresses outcome on t * rho^2, fills se_hac at the
// automatic lag. Slope keeps the regression sign (positive for growing log
// perplexity).
FitResult reduced_form_fit(Dataset data);

// Regresses log(outcome) on t * rho^2 where outcome is a positive relative
// quality ratio; the reported slope is the decay rate b (sign-flipped
// coefficient). Rows are used in the order given.
FitResult scaling_fit(const Dataset& data);

// Variance lower bound sigma^2 / T for the Gaussian location model.
double fisher_crlb(double sigma_o, double t_obs);

// Synthetic log-perplexity panel: for each rho in the grid and t = 1..t_max,
// outcome = intercept + b_true * t * rho^2 + sigma_u * N(0,1). Draw order is
// rho-major, t-minor. sigma_u = 0 gives the noiseless design.
Dataset synthetic_perplexity(double b_true, double sigma_u, int t_max,
                             std::span<const double> rho_grid, double intercept,
                             std::uint64_t seed);

}  // namespace sdce::est
