#include "fegan/tsmodels.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

namespace fegan::ts {

// ---------------------------------------------------------------------------
// GBM

GbmParams gbm_estimate(std::span<const double> context) {
    if (context.size() < 2) throw TooShort(context.size(), 2);
    const double m = stats::mean(context);
    const double sd = stats::sample_std(context);
    GbmParams params;
    params.sigma = sd;
    params.mu = m + 0.5 * sd * sd;
    return params;
}

std::vector<double> gbm_simulate(const GbmParams& params, std::size_t len, Rng& rng) {
    std::vector<double> out(len);
    const double m = params.log_return_mean();
    for (double& x : out) x = m + params.sigma * rng.normal();
    return out;
}

// ---------------------------------------------------------------------------
// ARMA spec / grid

ArmaSpec::ArmaSpec(std::size_t ar, std::size_t ma) : p(ar), q(ma) {
    const bool pure_ar = q == 0 && p >= 1 && p <= 3;
    const bool pure_ma = p == 0 && q >= 1 && q <= 3;
    const bool mixed = p >= 1 && p <= 2 && q >= 1 && q <= 2;
    if (!pure_ar && !pure_ma && !mixed)
        throw Error("ArmaSpec(" + std::to_string(p) + "," + std::to_string(q) +
                    ") outside the supported grid");
}

std::string ArmaSpec::name() const {
    if (q == 0) return "AR(" + std::to_string(p) + ")";
    if (p == 0) return "MA(" + std::to_string(q) + ")";
    return "ARMA(" + std::to_string(p) + "," + std::to_string(q) + ")";
}

std::vector<ArmaSpec> default_grid() {
    return {ArmaSpec{1, 0}, ArmaSpec{2, 0}, ArmaSpec{3, 0},
            ArmaSpec{0, 1}, ArmaSpec{0, 2}, ArmaSpec{0, 3},
            ArmaSpec{1, 1}, ArmaSpec{1, 2}, ArmaSpec{2, 1}, ArmaSpec{2, 2}};
}

double ArmaModel::process_mean() const {
    double s = 0.0;
    for (double f : phi) s += f;
    return intercept / (1.0 - s);
}

// ---------------------------------------------------------------------------
// Internals: polynomial roots, CSS objective, Nelder-Mead

namespace {

// Largest modulus among the roots of z^p - phi1 z^(p-1) - ... - phip, i.e.
// the inverse characteristic roots. Stationarity <=> all moduli < 1.
double max_inverse_root_modulus(std::span<const double> phi) {
    const std::size_t p = phi.size();
    if (p == 0) return 0.0;
    if (p == 1) return std::abs(phi[0]);
    using C = std::complex<double>;
    // Monic coefficients, ascending power: c0 + c1 z + ... + z^p.
    std::vector<C> c(p + 1);
    for (std::size_t i = 0; i < p; ++i) c[p - 1 - i] = C(-phi[i], 0.0);
    c[p] = C(1.0, 0.0);

    std::vector<C> roots(p);
    C seed(0.4, 0.9);
    C acc(1.0, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        acc *= seed;
        roots[i] = acc;
    }
    auto eval = [&](C z) {
        C v = c[p];
        for (std::size_t i = p; i-- > 0;) v = v * z + c[i];
        return v;
    };
    for (int iter = 0; iter < 60; ++iter) {
        double move = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            C denom(1.0, 0.0);
            for (std::size_t j = 0; j < p; ++j)
                if (j != i) denom *= roots[i] - roots[j];
            if (std::abs(denom) < 1e-300) denom = C(1e-300, 0.0);
            const C delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            move = std::max(move, std::abs(delta));
        }
        if (move < 1e-13) break;
    }
    double mx = 0.0;
    for (const C& r : roots) mx = std::max(mx, std::abs(r));
    return mx;
}

struct CssResult {
    double ssr = std::numeric_limits<double>::infinity();
    std::size_t n_eff = 0;
};

// Conditional sum of squares with zero pre-sample values: the recursion runs
// from t = 0 with missing lags treated as zero, so every order uses the same
// effective sample and information criteria stay comparable across the grid.
CssResult css_ssr(std::span<const double> series, double mu,
                  std::span<const double> phi, std::span<const double> theta) {
    const std::size_t n = series.size();
    const std::size_t p = phi.size();
    const std::size_t q = theta.size();
    std::vector<double> e(n, 0.0);
    double ssr = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double pred = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            if (t >= i + 1) pred += phi[i] * (series[t - 1 - i] - mu);
        for (std::size_t j = 0; j < q; ++j)
            if (t >= j + 1) pred += theta[j] * e[t - 1 - j];
        const double resid = (series[t] - mu) - pred;
        e[t] = resid;
        ssr += resid * resid;
        if (!std::isfinite(ssr)) return {};
    }
    return {ssr, n};
}

// Objective on the (mu, phi, theta) vector: half the effective-sample log of
// the mean squared innovation, plus a smooth barrier pushing the AR
// polynomial away from the unit circle.
double css_objective(std::span<const double> series, std::size_t p, std::size_t q,
                     std::span<const double> x) {
    const double mu = x[0];
    std::span<const double> phi = x.subspan(1, p);
    std::span<const double> theta = x.subspan(1 + p, q);
    double barrier = 0.0;
    if (p > 0) {
        const double mod = max_inverse_root_modulus(phi);
        if (!(mod < 0.995)) {
            const double excess = mod - 0.995;
            barrier = 1e4 * excess * excess + 1e2 * excess;
        }
    }
    const CssResult r = css_ssr(series, mu, phi, theta);
    if (!std::isfinite(r.ssr) || r.n_eff == 0) return 1e300;
    const double msr = std::max(r.ssr / static_cast<double>(r.n_eff), 1e-300);
    return 0.5 * static_cast<double>(r.n_eff) * std::log(msr) + barrier;
}

struct NmResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
};

// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5,
// shrink 0.5) with an absolute+relative spread stopping rule.
NmResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                     std::span<const double> x0, std::span<const double> step,
                     std::size_t max_iter) {
    const std::size_t d = x0.size();
    std::vector<std::vector<double>> pts(d + 1, std::vector<double>(x0.begin(), x0.end()));
    for (std::size_t i = 0; i < d; ++i) pts[i + 1][i] += step[i];
    std::vector<double> fv(d + 1);
    for (std::size_t i = 0; i <= d; ++i) fv[i] = f(pts[i]);

    std::vector<std::size_t> order(d + 1);
    std::vector<double> centroid(d), xr(d), xe(d), xc(d);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order[0], worst = order[d];
        if (std::abs(fv[worst] - fv[best]) <=
            1e-11 * (std::abs(fv[best]) + std::abs(fv[worst])) + 1e-12)
            break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t k = 0; k <= d; ++k) {
            if (k == worst) continue;
            for (std::size_t j = 0; j < d; ++j) centroid[j] += pts[k][j];
        }
        for (double& c : centroid) c /= static_cast<double>(d);

        for (std::size_t j = 0; j < d; ++j)
            xr[j] = centroid[j] + (centroid[j] - pts[worst][j]);
        const double fr = f(xr);

        if (fr < fv[best]) {
            for (std::size_t j = 0; j < d; ++j)
                xe[j] = centroid[j] + 2.0 * (centroid[j] - pts[worst][j]);
            const double fe = f(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[order[d - 1]]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        const std::vector<double>& base = outside ? xr : pts[worst];
        for (std::size_t j = 0; j < d; ++j)
            xc[j] = centroid[j] + 0.5 * (base[j] - centroid[j]);
        const double fc = f(xc);
        if (fc < std::min(fr, fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t k = 0; k <= d; ++k) { // shrink toward best
            if (k == best) continue;
            for (std::size_t j = 0; j < d; ++j)
                pts[k][j] = pts[best][j] + 0.5 * (pts[k][j] - pts[best][j]);
            fv[k] = f(pts[k]);
        }
    }
    NmResult out;
    std::size_t best = 0;
    for (std::size_t i = 1; i <= d; ++i)
        if (fv[i] < fv[best]) best = i;
    out.x = pts[best];
    out.f = fv[best];
    return out;
}

// Least-squares AR(p) on the demeaned series, solved by Gaussian elimination
// with partial pivoting (p <= 3).
std::vector<double> ols_ar(std::span<const double> series, double mu, std::size_t p) {
    const std::size_t n = series.size();
    std::vector<double> a(p * p, 0.0), b(p, 0.0);
    for (std::size_t t = p; t < n; ++t) {
        for (std::size_t i = 0; i < p; ++i) {
            const double xi = series[t - 1 - i] - mu;
            b[i] += xi * (series[t] - mu);
            for (std::size_t j = 0; j < p; ++j)
                a[i * p + j] += xi * (series[t - 1 - j] - mu);
        }
    }
    for (std::size_t i = 0; i < p; ++i) a[i * p + i] += 1e-8;
    std::vector<double> x(b);
    for (std::size_t col = 0; col < p; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < p; ++r)
            if (std::abs(a[r * p + col]) > std::abs(a[piv * p + col])) piv = r;
        for (std::size_t j = 0; j < p; ++j) std::swap(a[col * p + j], a[piv * p + j]);
        std::swap(x[col], x[piv]);
        const double d = a[col * p + col];
        if (std::abs(d) < 1e-30) return std::vector<double>(p, 0.0);
        for (std::size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            const double factor = a[r * p + col] / d;
            for (std::size_t j = 0; j < p; ++j) a[r * p + j] -= factor * a[col * p + j];
            x[r] -= factor * x[col];
        }
    }
    for (std::size_t i = 0; i < p; ++i) x[i] /= a[i * p + i];
    return x;
}

double lag1_autocorr(std::span<const double> series, double mu) {
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double z = series[t] - mu;
        den += z * z;
        if (t > 0) num += z * (series[t - 1] - mu);
    }
    return den > 0.0 ? num / den : 0.0;
}

} // namespace

ArmaModel arma_fit(std::span<const double> series, const ArmaSpec& spec) {
    const std::size_t p = spec.p, q = spec.q;
    const std::size_t need = 10 * (p + q + 1);
    if (series.size() < need) throw TooShort(series.size(), need);
    if (!all_finite(series)) throw Error("arma_fit: non-finite input");

    const std::size_t d = 1 + p + q;
    const double mu0 = stats::mean(series);
    const double sd0 = stats::sample_std(series);

    auto objective = [&](std::span<const double> x) {
        return css_objective(series, p, q, x);
    };

    std::vector<std::vector<double>> starts;
    {
        std::vector<double> s(d, 0.0);
        s[0] = mu0;
        starts.push_back(s);
    }
    {
        std::vector<double> s(d, 0.0);
        s[0] = mu0;
        if (p > 0) {
            const auto ar = ols_ar(series, mu0, p);
            for (std::size_t i = 0; i < p; ++i) s[1 + i] = ar[i];
            if (max_inverse_root_modulus({s.data() + 1, p}) >= 0.99)
                for (std::size_t i = 0; i < p; ++i) s[1 + i] *= 0.5;
        } else {
            // Method-of-moments MA(1) guess from the lag-1 autocorrelation.
            const double r1 = lag1_autocorr(series, mu0);
            double t1 = 0.0;
            if (std::abs(r1) < 0.49) {
                const double disc = 1.0 - 4.0 * r1 * r1;
                t1 = (1.0 - std::sqrt(disc)) / (2.0 * r1 + (r1 == 0.0 ? 1.0 : 0.0));
                if (!std::isfinite(t1)) t1 = 0.0;
            } else {
                t1 = r1 > 0 ? 0.5 : -0.5;
            }
            s[1 + p] = t1;
        }
        starts.push_back(s);
    }
    {
        Rng jitter(0xA11CE5EEDull + 131 * p + q);
        std::vector<double> s = starts[1];
        s[0] += 0.1 * sd0 * (jitter.uniform() - 0.5);
        for (std::size_t i = 1; i < d; ++i) s[i] += 0.2 * (jitter.uniform() - 0.5);
        starts.push_back(s);
    }

    std::vector<double> step(d, 0.2);
    step[0] = 0.25 * sd0 + 1e-6;

    NmResult best;
    for (const auto& s : starts) {
        const NmResult r = nelder_mead(objective, s, step, 400 * d);
        if (r.f < best.f) best = r;
    }
    if (!std::isfinite(best.f) || best.f >= 1e299)
        throw OptimizerFailed("no finite optimum for " + spec.name());

    const double mu = best.x[0];
    std::span<const double> phi{best.x.data() + 1, p};
    std::span<const double> theta{best.x.data() + 1 + p, q};
    if (p > 0 && !(max_inverse_root_modulus(phi) < 1.0)) throw NonStationaryFit();

    const CssResult css = css_ssr(series, mu, phi, theta);
    if (!std::isfinite(css.ssr) || css.ssr <= 0.0)
        throw OptimizerFailed("degenerate residual variance for " + spec.name());

    ArmaModel model;
    model.spec = spec;
    model.phi.assign(phi.begin(), phi.end());
    model.theta.assign(theta.begin(), theta.end());
    double phi_sum = 0.0;
    for (double f : model.phi) phi_sum += f;
    model.intercept = mu * (1.0 - phi_sum);
    model.sigma2 = css.ssr / static_cast<double>(css.n_eff);
    model.loglik = -0.5 * static_cast<double>(css.n_eff) *
                   (std::log(2.0 * M_PI * model.sigma2) + 1.0);
    model.n = series.size();
    return model;
}

InfoCriteria information_criteria(const ArmaModel& model) {
    const double k = static_cast<double>(model.spec.p + model.spec.q + 2);
    InfoCriteria ic;
    ic.aic = 2.0 * k - 2.0 * model.loglik;
    ic.bic = k * std::log(static_cast<double>(model.n)) - 2.0 * model.loglik;
    return ic;
}

SelectionTable select_arma(const data::CleanSeries& series,
                           const std::vector<ArmaSpec>& grid,
                           std::size_t window_len, std::size_t step) {
    if (grid.empty()) throw Error("select_arma: empty grid");
    if (series.size() < window_len) throw TooShort(series.size(), window_len);
    if (step == 0) throw Error("select_arma: step must be positive");

    SelectionTable table;
    std::vector<double> aic_sum(grid.size(), 0.0);
    std::vector<std::size_t> aic_count(grid.size(), 0);

    for (std::size_t start = 0; start + window_len <= series.size(); start += step) {
        std::span<const double> window{series.values.data() + start, window_len};
        for (std::size_t g = 0; g < grid.size(); ++g) {
            SelectionRow row;
            row.spec = grid[g];
            row.window_start = start;
            row.window_end = start + window_len;
            try {
                const ArmaModel model = arma_fit(window, grid[g]);
                const InfoCriteria ic = information_criteria(model);
                row.aic = ic.aic;
                row.bic = ic.bic;
                aic_sum[g] += ic.aic;
                ++aic_count[g];
            } catch (const Error&) {
                // missing cell; the sweep continues
            }
            table.rows.push_back(row);
        }
    }

    std::size_t winner = grid.size();
    double best_mean = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (aic_count[g] == 0) continue;
        const double m = aic_sum[g] / static_cast<double>(aic_count[g]);
        const bool better =
            m < best_mean ||
            (m == best_mean && winner < grid.size() &&
             grid[g].p + grid[g].q < grid[winner].p + grid[winner].q);
        if (better) {
            best_mean = m;
            winner = g;
        }
    }
    if (winner == grid.size())
        throw OptimizerFailed("every fit in the selection sweep failed");
    table.winner = grid[winner];
    return table;
}

void SelectionTable::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "spec,window_start,window_end,aic,bic\n";
    char buf[64];
    for (const SelectionRow& r : rows) {
        out << r.spec.name() << ',' << r.window_start << ',' << r.window_end << ',';
        if (r.aic) {
            std::snprintf(buf, sizeof(buf), "%.17g", *r.aic);
            out << buf;
        }
        out << ',';
        if (r.bic) {
            std::snprintf(buf, sizeof(buf), "%.17g", *r.bic);
            out << buf;
        }
        out << '\n';
    }
}

Forecast arma_forecast(const ArmaModel& model, std::span<const double> history,
                       std::size_t horizon) {
    const std::size_t p = model.spec.p, q = model.spec.q;
    const std::size_t need = std::max(p, q);
    if (history.size() < need || history.empty())
        throw TooShort(history.size(), std::max<std::size_t>(need, 1));

    const double mu = model.process_mean();
    const std::size_t n = history.size();

    // In-sample innovations under the fitted model, zero pre-sample values.
    std::vector<double> z(n + horizon, 0.0), e(n + horizon, 0.0);
    for (std::size_t t = 0; t < n; ++t) z[t] = history[t] - mu;
    for (std::size_t t = 0; t < n; ++t) {
        double pred = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            if (t >= i + 1) pred += model.phi[i] * z[t - 1 - i];
        for (std::size_t j = 0; j < q; ++j)
            if (t >= j + 1) pred += model.theta[j] * e[t - 1 - j];
        e[t] = z[t] - pred;
    }

    Forecast fc;
    fc.mean.resize(horizon);
    fc.ci_half_width.resize(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t t = n + h;
        double pred = 0.0;
        for (std::size_t i = 0; i < p; ++i) pred += model.phi[i] * z[t - 1 - i];
        for (std::size_t j = 0; j < q; ++j) pred += model.theta[j] * e[t - 1 - j];
        z[t] = pred; // future innovations are zero
        fc.mean[h] = mu + pred;
    }

    // psi-weight recursion for the forecast error variance.
    std::vector<double> psi(horizon, 0.0);
    if (horizon > 0) psi[0] = 1.0;
    for (std::size_t k = 1; k < horizon; ++k) {
        double v = (k <= q) ? model.theta[k - 1] : 0.0;
        for (std::size_t i = 1; i <= std::min(k, p); ++i)
            v += model.phi[i - 1] * psi[k - i];
        psi[k] = v;
    }
    double cum = 0.0;
    for (std::size_t h = 0; h < horizon; ++h) {
        cum += psi[h] * psi[h];
        fc.ci_half_width[h] = 1.96 * std::sqrt(model.sigma2 * cum);
    }
    return fc;
}

Decomposition decompose(std::span<const double> series, std::size_t period) {
    if (period < 2) throw PeriodTooSmall(period);
    const std::size_t n = series.size();
    if (n < 2 * period) throw TooShort(n, 2 * period);

    Decomposition d;
    d.period = period;
    d.trend.assign(n, 0.0);
    d.seasonal.assign(n, 0.0);
    d.residual.assign(n, 0.0);

    const bool even = period % 2 == 0;
    const std::size_t half = even ? period / 2 : (period - 1) / 2;

    std::vector<char> has_trend(n, 0);
    for (std::size_t t = half; t + half < n; ++t) {
        double s = 0.0;
        if (even) {
            s += 0.5 * series[t - half] + 0.5 * series[t + half];
            for (std::size_t i = t - half + 1; i < t + half; ++i) s += series[i];
        } else {
            for (std::size_t i = t - half; i <= t + half; ++i) s += series[i];
        }
        d.trend[t] = s / static_cast<double>(period);
        has_trend[t] = 1;
    }

    std::vector<double> phase_sum(period, 0.0);
    std::vector<std::size_t> phase_count(period, 0);
    for (std::size_t t = 0; t < n; ++t) {
        if (!has_trend[t]) continue;
        phase_sum[t % period] += series[t] - d.trend[t];
        ++phase_count[t % period];
    }
    std::vector<double> phase_mean(period, 0.0);
    double grand = 0.0;
    for (std::size_t k = 0; k < period; ++k) {
        phase_mean[k] = phase_count[k] ? phase_sum[k] / static_cast<double>(phase_count[k]) : 0.0;
        grand += phase_mean[k];
    }
    grand /= static_cast<double>(period);
    for (double& m : phase_mean) m -= grand;

    for (std::size_t t = 0; t < n; ++t) d.seasonal[t] = phase_mean[t % period];
    for (std::size_t t = 0; t < n; ++t) {
        if (has_trend[t]) {
            d.residual[t] = series[t] - d.trend[t] - d.seasonal[t];
        } else {
            d.trend[t] = series[t] - d.seasonal[t];
            d.residual[t] = 0.0;
        }
    }
    return d;
}

std::vector<double> hybrid_generate(const ArmaModel& model,
                                    std::span<const double> history,
                                    double context_sigma, std::size_t horizon,
                                    std::size_t period, Rng& rng) {
    const Forecast fc = arma_forecast(model, history, horizon);
    const Decomposition d = decompose(fc.mean, period);
    std::vector<double> out(horizon);
    for (std::size_t t = 0; t < horizon; ++t)
        out[t] = d.trend[t] + d.seasonal[t] + context_sigma * rng.normal();
    return out;
}

const char* to_string(FeatureMethod m) {
    switch (m) {
        case FeatureMethod::None: return "none";
        case FeatureMethod::Historical: return "historical";
        case FeatureMethod::Gbm: return "gbm";
        case FeatureMethod::Arma: return "arma";
        case FeatureMethod::Hybrid: return "hybrid";
    }
    return "none";
}

FeatureMethod feature_method_from_string(const std::string& s) {
    if (s == "none") return FeatureMethod::None;
    if (s == "historical") return FeatureMethod::Historical;
    if (s == "gbm") return FeatureMethod::Gbm;
    if (s == "arma") return FeatureMethod::Arma;
    if (s == "hybrid") return FeatureMethod::Hybrid;
    throw Error("unknown feature method: " + s);
}

std::vector<double> generate_feature(FeatureMethod method,
                                     std::span<const double> context,
                                     const FeatureConfig& config, Rng& rng) {
    const std::size_t len = config.feature_len;
    switch (method) {
        case FeatureMethod::None:
            return {};
        case FeatureMethod::Historical: {
            if (context.size() < len) throw TooShort(context.size(), len);
            return {context.end() - static_cast<std::ptrdiff_t>(len), context.end()};
        }
        case FeatureMethod::Gbm:
            return gbm_simulate(gbm_estimate(context), len, rng);
        case FeatureMethod::Arma: {
            const ArmaModel model = arma_fit(context, config.arma_spec);
            return arma_forecast(model, context, len).mean;
        }
        case FeatureMethod::Hybrid: {
            const ArmaModel model = arma_fit(context, config.arma_spec);
            const double sigma = gbm_estimate(context).sigma;
            return hybrid_generate(model, context, sigma, len, config.period, rng);
        }
    }
    return {};
}

} // namespace fegan::ts
