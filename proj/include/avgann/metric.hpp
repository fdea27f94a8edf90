#pragma once

// l_p geometry: points, datasets, distances and bounded-instance checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "avgann/detail/numeric.hpp"
#include "avgann/errors.hpp"

namespace avgann {

using Point = std::vector<double>;
using PointId = std::uint32_t;

inline void require_finite(std::span<const double> x, const char* what = "point") {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw InvalidInput(std::string(what) + " has a non-finite coordinate");
        }
    }
}

namespace detail {

// ||x - y||_p without validation; scaled by the largest coordinate gap so
// that |.|^p neither overflows nor underflows.
inline double lp_distance_unchecked(std::span<const double> x, std::span<const double> y,
                                    double p_exp) noexcept {
    double scale = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        scale = std::max(scale, std::abs(x[i] - y[i]));
    }
    if (scale == 0.0) {
        return 0.0;
    }
    if (p_exp == 2.0) {
        CompensatedSum acc;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double t = (x[i] - y[i]) / scale;
            acc += t * t;
        }
        return scale * std::sqrt(acc.value());
    }
    CompensatedSum acc;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += abs_pow(std::abs(x[i] - y[i]) / scale, p_exp);
    }
    return scale * std::pow(acc.value(), 1.0 / p_exp);
}

inline double lp_norm_unchecked(std::span<const double> x, double p_exp) noexcept {
    double scale = 0.0;
    for (double v : x) {
        scale = std::max(scale, std::abs(v));
    }
    if (scale == 0.0) {
        return 0.0;
    }
    CompensatedSum acc;
    for (double v : x) {
        acc += abs_pow(std::abs(v) / scale, p_exp);
    }
    return scale * std::pow(acc.value(), 1.0 / p_exp);
}

} // namespace detail

/// (sum |x_i|^p)^(1/p).
inline double lp_norm(std::span<const double> x, double p_exp) {
    if (!(p_exp >= 1.0) || !std::isfinite(p_exp)) {
        throw InvalidInput("lp_norm: exponent must be finite and >= 1");
    }
    require_finite(x);
    return detail::lp_norm_unchecked(x, p_exp);
}

inline double lp_distance(std::span<const double> x, std::span<const double> y, double p_exp) {
    if (x.size() != y.size()) {
        throw InvalidInput("lp_distance: dimension mismatch (" + std::to_string(x.size()) +
                           " vs " + std::to_string(y.size()) + ")");
    }
    if (!(p_exp >= 1.0) || !std::isfinite(p_exp)) {
        throw InvalidInput("lp_distance: exponent must be finite and >= 1");
    }
    require_finite(x);
    require_finite(y);
    return detail::lp_distance_unchecked(x, y, p_exp);
}

/// Dense row-major point set in l_p. Ids are 0-based insertion indices.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::size_t dim, double p_exp) : dim_(dim), p_exp_(p_exp) {
        if (dim == 0) {
            throw InvalidInput("dataset dimension must be >= 1");
        }
        if (!(p_exp >= 2.0) || !std::isfinite(p_exp)) {
            throw InvalidInput("dataset exponent p must be finite and >= 2");
        }
    }

    Dataset(const std::vector<Point>& points, double p_exp)
        : Dataset(points.empty() ? 0 : points.front().size(), p_exp) {
        coords_.reserve(points.size() * dim_);
        for (const auto& pt : points) {
            push_back(pt);
        }
    }

    static Dataset from_flat(std::vector<double> coords, std::size_t dim, double p_exp) {
        Dataset ds(dim, p_exp);
        if (coords.size() % dim != 0) {
            throw InvalidInput("flat coordinate buffer is not a multiple of the dimension");
        }
        require_finite(coords, "dataset");
        ds.coords_ = std::move(coords);
        return ds;
    }

    void push_back(std::span<const double> pt) {
        if (pt.size() != dim_) {
            throw InvalidInput("point dimension " + std::to_string(pt.size()) +
                               " does not match dataset dimension " + std::to_string(dim_));
        }
        require_finite(pt);
        coords_.insert(coords_.end(), pt.begin(), pt.end());
    }

    [[nodiscard]] std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
    [[nodiscard]] bool empty() const noexcept { return coords_.empty(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] double p_exp() const noexcept { return p_exp_; }
    [[nodiscard]] std::span<const double> flat() const noexcept { return coords_; }

    [[nodiscard]] std::span<const double> operator[](std::size_t id) const noexcept {
        return {coords_.data() + id * dim_, dim_};
    }

    [[nodiscard]] double distance(std::size_t a, std::size_t b) const noexcept {
        return detail::lp_distance_unchecked((*this)[a], (*this)[b], p_exp_);
    }

    /// Distance from an external point; validates dimension and finiteness.
    [[nodiscard]] double distance_to(std::span<const double> q, std::size_t id) const {
        return lp_distance(q, (*this)[id], p_exp_);
    }

    [[nodiscard]] std::vector<PointId> all_ids() const {
        std::vector<PointId> ids(size());
        std::iota(ids.begin(), ids.end(), PointId{0});
        return ids;
    }

    [[nodiscard]] Dataset scaled(double t) const {
        Dataset out = *this;
        for (double& v : out.coords_) {
            v *= t;
        }
        return out;
    }

    bool operator==(const Dataset&) const = default;

private:
    std::size_t dim_ = 0;
    double p_exp_ = 2.0;
    std::vector<double> coords_;
};

struct BoundedInstanceParams {
    double r = 1.0;
    double c = 2.0;
    double beta = 18.0;

    void validate() const {
        if (!(r > 0.0) || !(c > 1.0) || !(beta >= 1.0)) {
            throw InvalidParameter("bounded instance requires r > 0, c > 1, beta >= 1");
        }
    }

    [[nodiscard]] double upper() const noexcept { return beta * c * r; }
};

struct PairwiseStats {
    double min = 0.0;
    double max = 0.0;
    /// Sum of d(x,y)^2 over all ordered pairs; x = y pairs contribute 0.
    double sum_sq = 0.0;
};

/// Pairwise statistics of the points `ids`. min/max range over pairs of
/// distinct ids, plus the zero self-distance when `include_self_pairs`.
inline PairwiseStats pairwise_distance_stats(const Dataset& ds, std::span<const PointId> ids,
                                             bool include_self_pairs = false) {
    if (ids.size() < 2) {
        throw InvalidInput("pairwise_distance_stats needs at least 2 points");
    }
    PairwiseStats st;
    st.min = std::numeric_limits<double>::infinity();
    st.max = 0.0;
    detail::CompensatedSum acc;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            const double d = ds.distance(ids[i], ids[j]);
            st.min = std::min(st.min, d);
            st.max = std::max(st.max, d);
            acc += d * d;
        }
    }
    if (include_self_pairs) {
        st.min = 0.0;
    }
    st.sum_sq = 2.0 * acc.value();
    return st;
}

inline PairwiseStats pairwise_distance_stats(const Dataset& ds, bool include_self_pairs = false) {
    const auto ids = ds.all_ids();
    return pairwise_distance_stats(ds, ids, include_self_pairs);
}

/// True iff r <= d(x,y) <= beta*c*r for every pair of distinct points.
inline bool is_beta_bounded(const Dataset& ds, const BoundedInstanceParams& bp) {
    bp.validate();
    if (ds.size() < 2) {
        throw InvalidInput("is_beta_bounded needs at least 2 points");
    }
    const double hi = bp.upper();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = i + 1; j < ds.size(); ++j) {
            const double d = ds.distance(i, j);
            if (d < bp.r || d > hi) {
                return false;
            }
        }
    }
    return true;
}

} // namespace avgann
