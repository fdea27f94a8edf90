#pragma once

// p-stable (Gaussian) LSH for l_2: h(v) = floor((<a, v> + b) / W).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>

#include "avgann/detail/numeric.hpp"
#include "avgann/detail/rng.hpp"
#include "avgann/errors.hpp"
#include "avgann/metric.hpp"

namespace avgann {

using BucketId = std::int64_t;

struct LshFunction {
    Point direction;  // i.i.d. N(0, 1)
    double offset = 0.0;  // uniform in [0, width)
    double width = 1.0;

    bool operator==(const LshFunction&) const = default;
};

struct LshParams {
    double p1 = 0.0;
    double p2 = 0.0;
    double near_r = 0.0;
    double far_cr = 0.0;
    double rho = 0.0;
    double width = 0.0;
};

inline LshFunction sample_lsh(std::size_t dim, double width, Rng& rng) {
    if (!(width > 0.0) || !std::isfinite(width)) {
        throw InvalidParameter("sample_lsh: width W must be finite and > 0");
    }
    if (dim == 0) {
        throw InvalidParameter("sample_lsh: dimension must be >= 1");
    }
    LshFunction h;
    h.width = width;
    h.direction.resize(dim);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : h.direction) {
        v = gauss(rng);
    }
    std::uniform_real_distribution<double> unif(0.0, width);
    h.offset = unif(rng);
    if (h.offset >= width) {  // rounding can produce the open end
        h.offset = 0.0;
    }
    return h;
}

/// Bucket without validation; `v` must match the direction's dimension.
inline BucketId lsh_bucket(const LshFunction& h, std::span<const double> v) noexcept {
    const double proj = detail::accurate_dot(h.direction, v);
    return static_cast<BucketId>(std::floor((proj + h.offset) / h.width));
}

inline BucketId lsh_hash(const LshFunction& h, std::span<const double> v) {
    if (v.size() != h.direction.size()) {
        throw InvalidInput("lsh_hash: dimension mismatch (" + std::to_string(v.size()) + " vs " +
                           std::to_string(h.direction.size()) + ")");
    }
    return lsh_bucket(h, v);
}

/// Standard normal CDF via erfc.
inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Pr[h(x) = h(y)] for ||x - y||_2 = s:
///   1 - 2 Phi(-W/s) - 2 s / (sqrt(2 pi) W) * (1 - exp(-W^2 / (2 s^2)))
inline double collision_probability(double width, double dist) {
    if (!(width > 0.0)) {
        throw InvalidParameter("collision_probability: width W must be > 0");
    }
    if (!(dist >= 0.0)) {
        throw InvalidParameter("collision_probability: distance must be >= 0");
    }
    if (dist == 0.0) {
        return 1.0;
    }
    const double t = width / dist;
    if (!std::isfinite(t)) {
        return 1.0;
    }
    // 1 - 2 Phi(-t) = erf(t / sqrt 2); 1 - exp(-t^2/2) = -expm1(-t^2/2).
    const double first = std::erf(t / std::numbers::sqrt2);
    const double second = 2.0 / (std::sqrt(2.0 * std::numbers::pi) * t) * -std::expm1(-0.5 * t * t);
    const double p = first - second;
    return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
}

inline constexpr double kCalibrationTolerance = 1e-9;

/// Width W with collision_probability(W, near_r) = target_p1, by bisection
/// over W in [1e-6, 1e6] * near_r.
inline double calibrate_width(double near_r, double target_p1) {
    if (!(target_p1 > 0.0 && target_p1 < 1.0)) {
        throw InvalidParameter("calibrate_width: target p1 must lie in (0, 1)");
    }
    if (!(near_r > 0.0) || !std::isfinite(near_r)) {
        throw InvalidParameter("calibrate_width: near radius must be finite and > 0");
    }
    double lo = 1e-6 * near_r;
    double hi = 1e6 * near_r;
    if (collision_probability(lo, near_r) > target_p1 || collision_probability(hi, near_r) < target_p1) {
        throw CalibrationError("calibrate_width: target p1 = " + std::to_string(target_p1) +
                               " is outside the bracket [1e-6, 1e6] * r");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (collision_probability(mid, near_r) < target_p1) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double w = 0.5 * (lo + hi);
    if (std::abs(collision_probability(w, near_r) - target_p1) > kCalibrationTolerance) {
        throw CalibrationError("calibrate_width: bisection did not reach tolerance");
    }
    return w;
}

/// rho = ln(1/p1) / ln(1/p2).
inline double lsh_exponent(double p1, double p2) {
    if (!(0.0 < p2 && p2 < p1 && p1 < 1.0)) {
        throw InvalidParameter("lsh_exponent: requires 0 < p2 < p1 < 1");
    }
    return std::log(1.0 / p1) / std::log(1.0 / p2);
}

inline LshParams make_lsh_params(double near_r, double far_cr, double target_p1) {
    if (!(near_r < far_cr)) {
        throw InvalidParameter("make_lsh_params: near radius must be below far radius");
    }
    LshParams lp;
    lp.near_r = near_r;
    lp.far_cr = far_cr;
    lp.width = calibrate_width(near_r, target_p1);
    lp.p1 = collision_probability(lp.width, near_r);
    lp.p2 = collision_probability(lp.width, far_cr);
    lp.rho = lsh_exponent(lp.p1, lp.p2);
    return lp;
}

/// Fraction of `trials` freshly sampled hash functions under which two
/// points at l_2 distance `dist` (along a random direction) collide.
inline double empirical_collision_rate(double width, double dist, std::size_t trials, std::size_t dim,
                                       Rng& rng) {
    if (trials == 0) {
        throw InvalidParameter("empirical_collision_rate: trials must be >= 1");
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::size_t hits = 0;
    Point x(dim);
    Point y(dim);
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t j = 0; j < dim; ++j) {
            x[j] = gauss(rng);
        }
        Point u(dim);
        double n2 = 0.0;
        while (n2 == 0.0) {
            for (double& v : u) {
                v = gauss(rng);
            }
            n2 = std::sqrt(detail::accurate_dot(u, u));
        }
        for (std::size_t j = 0; j < dim; ++j) {
            y[j] = x[j] + dist * u[j] / n2;
        }
        const auto h = sample_lsh(dim, width, rng);
        hits += lsh_bucket(h, x) == lsh_bucket(h, y) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
}

} // namespace avgann
