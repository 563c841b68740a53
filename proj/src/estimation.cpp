#include "sdce/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdce/rng.hpp"

namespace sdce::est {

void sort_for_hac(Dataset& data) {
    std::stable_sort(data.rows.begin(), data.rows.end(),
                     [](const Observation& a, const Observation& b) {
                         if (a.rho != b.rho) return a.rho < b.rho;
                         return a.t < b.t;
                     });
}

FitResult ols_fit(const Dataset& data,
                  const std::function<double(const Observation&)>& regressor) {
    const std::size_t n = data.rows.size();
    if (n < 3) throw std::invalid_argument("least squares needs at least 3 rows");

    FitResult fit;
    fit.regressor.resize(n);
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = regressor(data.rows[i]);
        if (!std::isfinite(x) || !std::isfinite(data.rows[i].outcome))
            throw std::invalid_argument("regressor and outcome must be finite");
        fit.regressor[i] = x;
        sx += x;
        sy += data.rows[i].outcome;
    }
    const double xbar = sx / static_cast<double>(n);
    const double ybar = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = fit.regressor[i] - xbar;
        const double dy = data.rows[i].outcome - ybar;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("regressor has no variance");

    fit.slope = sxy / sxx;
    fit.intercept = ybar - fit.slope * xbar;
    fit.residuals.resize(n);
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        fit.residuals[i] =
            data.rows[i].outcome - fit.intercept - fit.slope * fit.regressor[i];
        ss_res += fit.residuals[i] * fit.residuals[i];
    }
    if (syy > 0.0) {
        fit.r_squared = 1.0 - ss_res / syy;
    } else {
        fit.r_squared = 0.0;  // constant outcome: declared fit-free by convention
        fit.zero_variance = true;
    }
    return fit;
}

int auto_lag(std::size_t n) {
    if (n == 0) throw std::invalid_argument("empty sample has no lag");
    return static_cast<int>(
        std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
}

double hac_se(const FitResult& fit, int lag) {
    const std::size_t n = fit.residuals.size();
    if (n == 0 || fit.regressor.size() != n)
        throw std::invalid_argument("fit does not carry a usable design");
    if (lag < 0 || static_cast<std::size_t>(lag) >= n)
        throw std::invalid_argument("lag must lie in [0, n)");

    // X = [1, x]; sandwich (X'X)^-1 Omega (X'X)^-1 with Bartlett weights.
    double sx = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += fit.regressor[i];
        sxx += fit.regressor[i] * fit.regressor[i];
    }
    const double nn = static_cast<double>(n);
    const double det = nn * sxx - sx * sx;
    if (!(det > 0.0)) throw std::invalid_argument("design matrix is singular");
    // Slope-relevant entries of (X'X)^-1.
    const double a01 = -sx / det, a11 = nn / det;

    double o00 = 0.0, o01 = 0.0, o11 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u2 = fit.residuals[i] * fit.residuals[i];
        o00 += u2;
        o01 += u2 * fit.regressor[i];
        o11 += u2 * fit.regressor[i] * fit.regressor[i];
    }
    for (int l = 1; l <= lag; ++l) {
        const double w = 1.0 - static_cast<double>(l) / (static_cast<double>(lag) + 1.0);
        for (std::size_t i = static_cast<std::size_t>(l); i < n; ++i) {
            const std::size_t j = i - static_cast<std::size_t>(l);
            const double uu = fit.residuals[i] * fit.residuals[j];
            const double xi = fit.regressor[i], xj = fit.regressor[j];
            o00 += 2.0 * w * uu;
            o01 += w * uu * (xi + xj);
            o11 += 2.0 * w * uu * xi * xj;
        }
    }

    // Slope entry of A * Omega * A, A = (X'X)^-1.
    const double b0 = a01 * o00 + a11 * o01;  // second row of A times Omega columns
    const double b1 = a01 * o01 + a11 * o11;
    const double v11 = b0 * a01 + b1 * a11;
    if (v11 < 0.0 && v11 > -1e-18) return 0.0;
    if (!(v11 >= 0.0)) throw std::domain_error("long-run variance came out negative");
    return std::sqrt(v11);
}

FitResult reduced_form_fit(Dataset data) {
    sort_for_hac(data);
    FitResult fit = ols_fit(
        data, [](const Observation& o) { return o.t * o.rho * o.rho; });
    fit.lag_used = auto_lag(data.rows.size());
    fit.se_hac = hac_se(fit, fit.lag_used);
    return fit;
}

FitResult scaling_fit(const Dataset& data) {
    Dataset logged;
    logged.rows.reserve(data.rows.size());
    for (const auto& row : data.rows) {
        if (!(row.outcome > 0.0))
            throw std::invalid_argument("scaling fit needs positive quality ratios");
        logged.rows.push_back({row.t, row.rho, std::log(row.outcome)});
    }
    FitResult fit = ols_fit(
        logged, [](const Observation& o) { return o.t * o.rho * o.rho; });
    fit.slope = -fit.slope;  // reported as the positive decay rate
    fit.lag_used = auto_lag(logged.rows.size());
    fit.se_hac = hac_se(fit, fit.lag_used);
    return fit;
}

double fisher_crlb(double sigma_o, double t_obs) {
    if (!(sigma_o > 0.0)) throw std::invalid_argument("observation noise must be > 0");
    if (!(t_obs > 0.0)) throw std::invalid_argument("observation count must be > 0");
    return sigma_o * sigma_o / t_obs;
}

Dataset synthetic_perplexity(double b_true, double sigma_u, int t_max,
                             std::span<const double> rho_grid, double intercept,
                             std::uint64_t seed) {
    if (t_max < 1) throw std::invalid_argument("t_max must be >= 1");
    if (sigma_u < 0.0) throw std::invalid_argument("noise level must be >= 0");
    if (rho_grid.empty()) throw std::invalid_argument("rho grid must be nonempty");
    Dataset data;
    data.rows.reserve(rho_grid.size() * static_cast<std::size_t>(t_max));
    Rng rng(seed);
    for (double rho : rho_grid) {
        if (!(rho >= 0.0 && rho <= 1.0))
            throw std::invalid_argument("rho grid values must lie in [0, 1]");
        for (int t = 1; t <= t_max; ++t) {
            const double noise = sigma_u > 0.0 ? sigma_u * rng.normal() : 0.0;
            data.rows.push_back(
                {static_cast<double>(t), rho,
                 intercept + b_true * static_cast<double>(t) * rho * rho + noise});
        }
    }
    return data;
}

}  // namespace sdce::est
