#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace avgann::detail {

// Neumaier's variant of Kahan summation.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }

    CompensatedSum& operator+=(double v) noexcept {
        add(v);
        return *this;
    }

    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// a^e for a >= 0, e > 0. Small integer exponents use exact repeated
/// multiplication; everything else goes through exp(e * ln a).
inline double abs_pow(double a, double e) noexcept {
    if (a == 0.0) {
        return 0.0;
    }
    if (e == std::floor(e) && e >= 1.0 && e <= 32.0) {
        auto k = static_cast<unsigned>(e);
        double base = a;
        double result = 1.0;
        while (k != 0) {
            if (k & 1U) {
                result *= base;
            }
            base *= base;
            k >>= 1U;
        }
        return result;
    }
    return std::exp(e * std::log(a));
}

// Error-free transformation of a product (Ogita-Rump-Oishi TwoProduct).
inline void two_product(double a, double b, double& p, double& err) noexcept {
    p = a * b;
    err = std::fma(a, b, -p);
}

inline void two_sum(double a, double b, double& s, double& err) noexcept {
    s = a + b;
    const double z = s - a;
    err = (a - (s - z)) + (b - z);
}

/// Dot product evaluated as if in twice the working precision (Dot2).
inline double accurate_dot(std::span<const double> x, std::span<const double> y) noexcept {
    double s = 0.0;
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double p = 0.0;
        double pe = 0.0;
        two_product(x[i], y[i], p, pe);
        double se = 0.0;
        two_sum(s, p, s, se);
        c += pe + se;
    }
    return s + c;
}

} // namespace avgann::detail
