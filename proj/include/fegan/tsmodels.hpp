#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fegan/common.hpp"
#include "fegan/data.hpp"

namespace fegan::ts {

class TooShort : public Error {
public:
    TooShort(std::size_t have, std::size_t need)
        : Error("series too short: have " + std::to_string(have) + ", need " +
                std::to_string(need)) {}
};

class PeriodTooSmall : public Error {
public:
    explicit PeriodTooSmall(std::size_t p)
        : Error("decomposition period must be >= 2, got " + std::to_string(p)) {}
};

class NonStationaryFit : public Error {
public:
    NonStationaryFit() : Error("fitted AR polynomial has a root inside the unit circle") {}
};

class OptimizerFailed : public Error {
public:
    explicit OptimizerFailed(const std::string& why)
        : Error("optimizer failed: " + why) {}
};

// ---------------------------------------------------------------------------
// GBM

// Per-step drift/volatility of a geometric Brownian motion. The implied
// log-return distribution is N(mu - sigma^2/2, sigma^2).
struct GbmParams {
    double mu = 0.0;
    double sigma = 0.0;

    double log_return_mean() const { return mu - 0.5 * sigma * sigma; }
};

// Estimate from a context already in log-return space: sigma is the unbiased
// sample standard deviation and mu is set so the simulated log-return mean
// equals the sample mean.
GbmParams gbm_estimate(std::span<const double> context);

// T i.i.d. draws from the implied log-return law.
std::vector<double> gbm_simulate(const GbmParams& params, std::size_t len, Rng& rng);

// ---------------------------------------------------------------------------
// ARMA

// Orders within the model grid: AR(1..3), MA(1..3), ARMA(p<=2, q<=2).
struct ArmaSpec {
    std::size_t p = 0;
    std::size_t q = 0;

    ArmaSpec(std::size_t ar, std::size_t ma);
    std::string name() const;
    bool operator==(const ArmaSpec&) const = default;
};

// The ten-spec grid used for rolling selection.
std::vector<ArmaSpec> default_grid();

struct ArmaModel {
    ArmaSpec spec{1, 0};
    std::vector<double> phi;   // AR coefficients
    std::vector<double> theta; // MA coefficients
    double intercept = 0.0;    // regression constant c; process mean = c/(1-sum(phi))
    double sigma2 = 1.0;       // innovation variance
    double loglik = 0.0;       // conditional Gaussian log-likelihood
    std::size_t n = 0;         // fit length

    double process_mean() const;
};

// Conditional-sum-of-squares fit: the innovations recursion starts from zero
// pre-sample values and the squared-error objective is minimized by a
// Nelder-Mead simplex with three starts (zeros, lag-regression warm start,
// small random perturbation). Stationarity of the AR polynomial is enforced.
ArmaModel arma_fit(std::span<const double> series, const ArmaSpec& spec);

// aic = 2k - 2*loglik, bic = k*ln(n) - 2*loglik with k = p + q + 2
// (intercept and innovation variance are counted as estimated).
struct InfoCriteria {
    double aic = 0.0;
    double bic = 0.0;
};
InfoCriteria information_criteria(const ArmaModel& model);

struct SelectionRow {
    ArmaSpec spec{1, 0};
    std::size_t window_start = 0; // inclusive
    std::size_t window_end = 0;   // exclusive
    std::optional<double> aic;    // empty when the fit failed on this window
    std::optional<double> bic;
};

struct SelectionTable {
    std::vector<SelectionRow> rows;
    ArmaSpec winner{1, 0};

    void write_csv(const std::string& path) const;
};

// Fit every grid spec on every rolling window (starts 0, step, 2*step, ...)
// and pick the spec with the lowest mean AIC across windows; ties go to the
// smaller p+q. Per-cell fit failures are recorded as missing cells.
SelectionTable select_arma(const data::CleanSeries& series,
                           const std::vector<ArmaSpec>& grid,
                           std::size_t window_len = 500, std::size_t step = 50);

struct Forecast {
    std::vector<double> mean;          // iterated expectation path
    std::vector<double> ci_half_width; // 1.96 * sqrt(accumulated psi-weight variance)
};

// Multi-step forecast with future innovations set to zero; the error variance
// accumulates through the MA(infinity) psi-weight recursion.
Forecast arma_forecast(const ArmaModel& model, std::span<const double> history,
                       std::size_t horizon);

// ---------------------------------------------------------------------------
// Classical additive decomposition

struct Decomposition {
    std::vector<double> trend;
    std::vector<double> seasonal;
    std::vector<double> residual;
    std::size_t period = 0;
};

// trend = centered moving average (2xP for even P); seasonal = zero-mean
// phase means of the detrended values; residual = observed - trend - seasonal.
// At the edges where the moving average is undefined the residual is set to 0
// and the trend to observed - seasonal, keeping the additive identity exact.
Decomposition decompose(std::span<const double> series, std::size_t period);

// Trend + seasonal of the forecast mean path plus i.i.d. N(0, context_sigma^2)
// noise in place of the residual.
std::vector<double> hybrid_generate(const ArmaModel& model,
                                    std::span<const double> history,
                                    double context_sigma, std::size_t horizon,
                                    std::size_t period, Rng& rng);

// ---------------------------------------------------------------------------
// Feature generation

enum class FeatureMethod { None, Historical, Gbm, Arma, Hybrid };

const char* to_string(FeatureMethod m);
FeatureMethod feature_method_from_string(const std::string& s);

struct FeatureConfig {
    std::size_t feature_len = 250;
    ArmaSpec arma_spec{2, 1};
    std::size_t period = 20; // decomposition period for the hybrid model
};

// One feature sequence of length feature_len from a context window; empty for
// FeatureMethod::None (noise-only benchmark).
std::vector<double> generate_feature(FeatureMethod method,
                                     std::span<const double> context,
                                     const FeatureConfig& config, Rng& rng);

} // namespace fegan::ts
