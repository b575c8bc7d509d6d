#pragma once

#include <cstddef>
#include <span>

#include "fegan/common.hpp"

namespace fegan::risk {

class EmptySample : public Error {
public:
    EmptySample() : Error("empty sample") {}
};

class NonFiniteValue : public Error {
public:
    NonFiniteValue() : Error("sample contains a non-finite value") {}
};

class AlphaMismatch : public Error {
public:
    AlphaMismatch(double a, double b)
        : Error("alpha mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

// Probability level in (0, 1). Lower-tail convention throughout: VaR is the
// alpha-quantile of the values themselves, ES the mean at or below it.
struct RiskLevel {
    double alpha = 0.05;

    explicit RiskLevel(double a = 0.05) : alpha(a) {
        if (!(a > 0.0) || !(a < 1.0)) throw Error("alpha must lie in (0,1)");
    }
};

struct RiskReport {
    RiskLevel alpha;
    double var = 0.0;
    double es = 0.0;
    std::size_t n = 0;
};

struct DiffReport {
    double var_diff = 0.0;
    double es_diff = 0.0;
    RiskLevel alpha;
};

// Empirical (VaR, ES) at level alpha: sort ascending, k = ceil(alpha*n),
// VaR = k-th order statistic, ES = mean of the k smallest values.
RiskReport var_es(std::span<const double> sample, RiskLevel alpha);

// The k used by var_es. A small backoff guards against alpha*n landing a hair
// above an integer because alpha is not exactly representable.
std::size_t tail_count(double alpha, std::size_t n);

// Joint (VaR, ES) scoring function, the G1(t) = t / G2 = logistic member of
// the Fissler-Ziegel family:
//   S(v,e,x) = (1{x<=v} - a)*v - 1{x<=v}*x
//            + sigmoid(e)*(e - v + 1{x<=v}*(v-x)/a) - softplus(e)
// Strictly positive G2 on all reals, so the score is usable on signed data.
double fz_score(double v, double e, double x, RiskLevel alpha);

// Mean of fz_score over the sample, same summation order as a plain loop.
double batch_score(double v, double e, std::span<const double> sample,
                   RiskLevel alpha);

// Partial derivatives of batch_score in (v, e), averaged over the sample.
// The indicator kink at x = v uses the same closed-inequality convention.
struct ScoreGrad {
    double dv = 0.0;
    double de = 0.0;
};
ScoreGrad batch_score_grad(double v, double e, std::span<const double> sample,
                           RiskLevel alpha);

// d fz_score / d x at fixed (v, e); used when the sample itself is trainable.
double fz_score_dx(double v, double e, double x, RiskLevel alpha);

// Per-alpha absolute differences between two reports at the same level.
DiffReport diff(const RiskReport& real_report, const RiskReport& gen_report);

// Numerically safe logistic and softplus.
double sigmoid(double x);
double softplus(double x);

} // namespace fegan::risk
