#include "fegan/risk.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fegan::risk {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double ex = std::exp(x);
    return ex / (1.0 + ex);
}

double softplus(double x) {
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

std::size_t tail_count(double alpha, std::size_t n) {
    const double an = alpha * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(an - 1e-9));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return k;
}

RiskReport var_es(std::span<const double> sample, RiskLevel alpha) {
    if (sample.empty()) throw EmptySample();
    for (double x : sample)
        if (!std::isfinite(x)) throw NonFiniteValue();

    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = tail_count(alpha.alpha, sorted.size());

    double tail_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) tail_sum += sorted[i];

    RiskReport report{alpha};
    report.var = sorted[k - 1];
    report.es = tail_sum / static_cast<double>(k);
    report.n = sorted.size();
    return report;
}

namespace {

// Shared core with sigmoid/softplus hoisted so batch_score stays cheap in
// the grid-search and Tail-GAN paths.
inline double fz_core(double v, double e, double x, double alpha, double sig,
                      double sp) {
    const double h = (x <= v) ? 1.0 : 0.0;
    return (h - alpha) * v - h * x + sig * (e - v + h * (v - x) / alpha) - sp;
}

} // namespace

double fz_score(double v, double e, double x, RiskLevel alpha) {
    if (!std::isfinite(v) || !std::isfinite(e) || !std::isfinite(x))
        throw NonFiniteValue();
    return fz_core(v, e, x, alpha.alpha, sigmoid(e), softplus(e));
}

double batch_score(double v, double e, std::span<const double> sample,
                   RiskLevel alpha) {
    if (sample.empty()) throw EmptySample();
    const double sig = sigmoid(e);
    const double sp = softplus(e);
    double sum = 0.0;
    for (double x : sample) sum += fz_core(v, e, x, alpha.alpha, sig, sp);
    return sum / static_cast<double>(sample.size());
}

ScoreGrad batch_score_grad(double v, double e, std::span<const double> sample,
                           RiskLevel alpha) {
    if (sample.empty()) throw EmptySample();
    const double a = alpha.alpha;
    const double sig = sigmoid(e);
    const double dsig = sig * (1.0 - sig);
    double dv = 0.0, de = 0.0;
    for (double x : sample) {
        const double h = (x <= v) ? 1.0 : 0.0;
        dv += (h - a) + sig * (h / a - 1.0);
        de += dsig * (e - v + h * (v - x) / a);
    }
    const auto n = static_cast<double>(sample.size());
    return {dv / n, de / n};
}

double fz_score_dx(double v, double e, double x, RiskLevel alpha) {
    const double h = (x <= v) ? 1.0 : 0.0;
    return -h - sigmoid(e) * h / alpha.alpha;
}

DiffReport diff(const RiskReport& real_report, const RiskReport& gen_report) {
    if (real_report.alpha.alpha != gen_report.alpha.alpha)
        throw AlphaMismatch(real_report.alpha.alpha, gen_report.alpha.alpha);
    DiffReport d{std::abs(real_report.var - gen_report.var),
                 std::abs(real_report.es - gen_report.es), real_report.alpha};
    return d;
}

} // namespace fegan::risk
