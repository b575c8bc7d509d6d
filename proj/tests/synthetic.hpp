#pragma once

// Test-only data generators and file helpers shared by the unit and
// acceptance suites.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

#include "fegan/common.hpp"

namespace testutil {

inline std::vector<double> iid_normal(fegan::Rng& rng, std::size_t n, double mean,
                                      double sd) {
    std::vector<double> out(n);
    for (double& x : out) x = mean + sd * rng.normal();
    return out;
}

inline std::vector<double> ar1(fegan::Rng& rng, std::size_t n, double phi,
                               double sigma, double mean = 0.0,
                               std::size_t burn = 500) {
    std::vector<double> out(n);
    double x = 0.0;
    for (std::size_t t = 0; t < burn; ++t) x = phi * x + sigma * rng.normal();
    for (std::size_t t = 0; t < n; ++t) {
        x = phi * x + sigma * rng.normal();
        out[t] = mean + x;
    }
    return out;
}

inline std::vector<double> arma_sim(fegan::Rng& rng, std::size_t n,
                                    std::span<const double> phi,
                                    std::span<const double> theta, double sigma,
                                    double mean = 0.0, std::size_t burn = 500) {
    const std::size_t p = phi.size(), q = theta.size();
    std::vector<double> z(burn + n, 0.0), e(burn + n, 0.0);
    for (std::size_t t = 0; t < burn + n; ++t) {
        e[t] = sigma * rng.normal();
        double v = e[t];
        for (std::size_t i = 0; i < p; ++i)
            if (t >= i + 1) v += phi[i] * z[t - 1 - i];
        for (std::size_t j = 0; j < q; ++j)
            if (t >= j + 1) v += theta[j] * e[t - 1 - j];
        z[t] = v;
    }
    std::vector<double> out(n);
    for (std::size_t t = 0; t < n; ++t) out[t] = mean + z[burn + t];
    return out;
}

// Write a value series as a dated CSV (synthetic calendar, 28-day months).
inline void write_csv(const std::string& path, std::span<const double> values,
                      const std::string& date_col = "date",
                      const std::string& value_col = "value") {
    std::ofstream out(path);
    out << date_col << ',' << value_col << '\n';
    int y = 2014, m = 1, d = 1;
    char buf[96];
    for (double v : values) {
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d,%.17g\n", y, m, d, v);
        out << buf;
        if (++d > 28) {
            d = 1;
            if (++m > 12) {
                m = 1;
                ++y;
            }
        }
    }
}

// Self-cleaning scratch directory.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("fegan_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace testutil
