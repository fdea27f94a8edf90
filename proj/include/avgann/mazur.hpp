#pragma once

// Mazur-map average embedding of l_p into l_2:
//
//   h(x)_i = sign(x_i) |x_i|^{p/2}
//   f(x)   = h(x) * ||x||_p / ||h(x)||_2      (f(0) = 0)
//
// applied to shifted points x -> f(x - z). f is (p+1)-Lipschitz and
// preserves norms: ||f(x)||_2 = ||x||_p.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avgann/detail/numeric.hpp"
#include "avgann/detail/rng.hpp"
#include "avgann/errors.hpp"
#include "avgann/metric.hpp"

namespace avgann {

inline Point mazur_h(std::span<const double> x, double p_exp) {
    require_finite(x);
    const double e = p_exp / 2.0;
    Point out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double m = detail::abs_pow(std::abs(x[i]), e);
        out[i] = x[i] < 0.0 ? -m : m;
    }
    return out;
}

/// Inverse of mazur_h: sign(y_i) |y_i|^{2/p}.
inline Point mazur_h_inverse(std::span<const double> y, double p_exp) {
    require_finite(y);
    const double e = 2.0 / p_exp;
    Point out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double m = detail::abs_pow(std::abs(y[i]), e);
        out[i] = y[i] < 0.0 ? -m : m;
    }
    return out;
}

/// The map x -> f(x - z) for a fixed exponent p and center z.
class AvgEmbedding {
public:
    AvgEmbedding() = default;

    AvgEmbedding(double p_exp, Point center_z) : p_exp_(p_exp), center_z_(std::move(center_z)) {
        if (!(p_exp >= 2.0) || !std::isfinite(p_exp)) {
            throw InvalidParameter("embedding exponent must be finite and >= 2");
        }
        if (center_z_.empty()) {
            throw InvalidParameter("embedding center must have dimension >= 1");
        }
        require_finite(center_z_, "embedding center");
    }

    [[nodiscard]] double p_exp() const noexcept { return p_exp_; }
    [[nodiscard]] const Point& center() const noexcept { return center_z_; }
    [[nodiscard]] std::size_t dim() const noexcept { return center_z_.size(); }
    /// Lipschitz constant D = p + 1.
    [[nodiscard]] double lip_const() const noexcept { return p_exp_ + 1.0; }

    /// Writes f(x - z) into `out` (same dimension). No validation.
    void embed_into(std::span<const double> x, std::span<double> out) const noexcept {
        const std::size_t n = center_z_.size();
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = x[i] - center_z_[i];
            scale = std::max(scale, std::abs(out[i]));
        }
        if (scale == 0.0) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        if (p_exp_ == 2.0) {
            return;
        }
        // h is (p/2)-homogeneous, so evaluate on u / scale and rescale by
        // ||u||_p / ||h(u/scale)||_2 (the ratio is scale-free).
        const double half = p_exp_ / 2.0;
        // sum |a_i|^p == sum h_i^2 feeds both norms.
        detail::CompensatedSum acc;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = detail::abs_pow(std::abs(out[i]) / scale, half);
            acc += m * m;
            out[i] = out[i] < 0.0 ? -m : m;
        }
        const double sp = acc.value();
        const double factor = scale * std::pow(sp, 1.0 / p_exp_) / std::sqrt(sp);
        for (std::size_t i = 0; i < n; ++i) {
            out[i] *= factor;
        }
    }

    [[nodiscard]] Point embed(std::span<const double> x) const {
        if (x.size() != center_z_.size()) {
            throw InvalidInput("embed_f: point dimension " + std::to_string(x.size()) +
                               " does not match embedding dimension " +
                               std::to_string(center_z_.size()));
        }
        require_finite(x);
        Point out(x.size());
        embed_into(x, out);
        return out;
    }

    bool operator==(const AvgEmbedding&) const = default;

private:
    double p_exp_ = 2.0;
    Point center_z_;
};

inline Point embed_f(std::span<const double> x, const AvgEmbedding& emb) { return emb.embed(x); }

namespace detail {

inline double l2_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max(scale, std::abs(a[i] - b[i]));
    }
    if (scale == 0.0) {
        return 0.0;
    }
    CompensatedSum acc;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = (a[i] - b[i]) / scale;
        acc += t * t;
    }
    return scale * std::sqrt(acc.value());
}

/// f(x - z) for every point of `ids`, row-major.
inline std::vector<double> embed_all(const Dataset& ds, std::span<const PointId> ids,
                                     const AvgEmbedding& emb) {
    const std::size_t d = ds.dim();
    std::vector<double> out(ids.size() * d);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        emb.embed_into(ds[ids[k]], std::span<double>(out.data() + k * d, d));
    }
    return out;
}

// sum_{i,j} ||u_i - u_j||_2^2 = 2 m sum_i ||u_i - mean||_2^2 over rows of `rows`.
inline double ordered_pair_spread(std::span<const double> rows, std::size_t dim) {
    const std::size_t m = rows.size() / dim;
    if (m == 0) {
        return 0.0;
    }
    std::vector<double> mean(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) {
        CompensatedSum s;
        for (std::size_t k = 0; k < m; ++k) {
            s += rows[k * dim + j];
        }
        mean[j] = s.value() / static_cast<double>(m);
    }
    CompensatedSum acc;
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double t = rows[k * dim + j] - mean[j];
            acc += t * t;
        }
    }
    return 2.0 * static_cast<double>(m) * acc.value();
}

inline double lp_pair_sum_sq(const Dataset& ds, std::span<const PointId> ids) {
    if (ids.size() < 2) {
        return 0.0;
    }
    return pairwise_distance_stats(ds, ids).sum_sq;
}

} // namespace detail

struct LipschitzProbeResult {
    double max_ratio = 0.0;
    std::size_t pairs_evaluated = 0;
    std::size_t identical_skipped = 0;
};

template <typename Sampler>
concept PointPairSampler = requires(Sampler s) {
    { s() } -> std::convertible_to<std::pair<Point, Point>>;
};

/// Max of ||f(x-z) - f(y-z)||_2 / ||x - y||_p over `n_pairs` sampled pairs.
/// Identical pairs are skipped and counted.
template <PointPairSampler Sampler>
LipschitzProbeResult lipschitz_probe(const AvgEmbedding& emb, Sampler&& sampler, std::size_t n_pairs) {
    if (n_pairs == 0) {
        throw InvalidParameter("lipschitz_probe: n_pairs must be >= 1");
    }
    LipschitzProbeResult res;
    Point fx(emb.dim());
    Point fy(emb.dim());
    for (std::size_t k = 0; k < n_pairs; ++k) {
        const auto [x, y] = sampler();
        if (x.size() != emb.dim()) {
            throw InvalidInput("lipschitz_probe: sampled point dimension mismatch");
        }
        const double dx = lp_distance(x, y, emb.p_exp());
        if (dx == 0.0) {
            ++res.identical_skipped;
            continue;
        }
        emb.embed_into(x, fx);
        emb.embed_into(y, fy);
        res.max_ratio = std::max(res.max_ratio, detail::l2_distance(fx, fy) / dx);
        ++res.pairs_evaluated;
    }
    return res;
}

/// C_emp = sum_{i,j} ||f(x_i-z) - f(x_j-z)||_2^2 / sum_{i,j} ||x_i - x_j||_p^2.
/// `lp_sum_sq` may carry a precomputed denominator for the same ids.
inline double noncontraction_ratio(const Dataset& ds, std::span<const PointId> ids,
                                   const AvgEmbedding& emb,
                                   std::optional<double> lp_sum_sq = std::nullopt) {
    if (ids.size() < 2) {
        throw InvalidInput("noncontraction_ratio needs at least 2 points");
    }
    if (emb.dim() != ds.dim()) {
        throw InvalidInput("noncontraction_ratio: embedding and dataset dimensions differ");
    }
    const double denom = lp_sum_sq ? *lp_sum_sq : detail::lp_pair_sum_sq(ds, ids);
    if (denom == 0.0) {
        throw UndefinedRatio("noncontraction_ratio: all points are identical");
    }
    const auto rows = detail::embed_all(ds, ids, emb);
    return detail::ordered_pair_spread(rows, ds.dim()) / denom;
}

inline double noncontraction_ratio(const Dataset& ds, const AvgEmbedding& emb) {
    const auto ids = ds.all_ids();
    return noncontraction_ratio(ds, ids, emb);
}

/// Candidate centers tried by center_scan, in this fixed order:
/// coordinate-wise mean, coordinate-wise median, up to `sampled_points`
/// dataset points, then `perturbations` random l_p-directions around the
/// median at radii spread * 2^(k - 8), k = i mod `scale_octaves`, where
/// spread is the mean l_p distance of the points to the median.
struct CenterCandidatePolicy {
    std::size_t sampled_points = 64;
    std::size_t perturbations = 64;
    int scale_octaves = 12;
};

struct CenterCandidateScore {
    std::string label;
    double c_emp = 0.0;
};

struct CenterScanResult {
    Point best_z;
    double best_C = 0.0;
    std::string best_label;
    std::size_t best_index = 0;
    std::vector<CenterCandidateScore> candidates;
};

namespace detail {

inline Point coordinate_mean(const Dataset& ds, std::span<const PointId> ids) {
    Point z(ds.dim());
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        CompensatedSum s;
        for (PointId id : ids) {
            s += ds[id][j];
        }
        z[j] = s.value() / static_cast<double>(ids.size());
    }
    return z;
}

inline Point coordinate_median(const Dataset& ds, std::span<const PointId> ids) {
    Point z(ds.dim());
    std::vector<double> col(ids.size());
    const std::size_t m = ids.size();
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        for (std::size_t k = 0; k < m; ++k) {
            col[k] = ds[ids[k]][j];
        }
        std::sort(col.begin(), col.end());
        z[j] = (m % 2 == 1) ? col[m / 2] : 0.5 * (col[m / 2 - 1] + col[m / 2]);
    }
    return z;
}

} // namespace detail

/// Scores every candidate center by C_emp and returns the first maximizer.
inline CenterScanResult center_scan(const Dataset& ds, std::span<const PointId> ids, Rng& rng,
                                    const CenterCandidatePolicy& policy = {},
                                    std::optional<double> lp_sum_sq = std::nullopt) {
    if (ids.size() < 2) {
        throw InvalidInput("center_scan needs at least 2 points");
    }
    const double denom = lp_sum_sq ? *lp_sum_sq : detail::lp_pair_sum_sq(ds, ids);
    if (denom == 0.0) {
        throw UndefinedRatio("center_scan: all points are identical");
    }
    const std::size_t d = ds.dim();
    const double p = ds.p_exp();

    CenterScanResult res;
    res.best_C = -std::numeric_limits<double>::infinity();
    std::vector<double> rows(ids.size() * d);
    auto score = [&](Point z, std::string label) {
        const AvgEmbedding emb(p, z);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            emb.embed_into(ds[ids[k]], std::span<double>(rows.data() + k * d, d));
        }
        const double c = detail::ordered_pair_spread(rows, d) / denom;
        if (c > res.best_C) {
            res.best_C = c;
            res.best_z = std::move(z);
            res.best_label = label;
            res.best_index = res.candidates.size();
        }
        res.candidates.push_back({std::move(label), c});
    };

    const Point median = detail::coordinate_median(ds, ids);
    score(detail::coordinate_mean(ds, ids), "mean");
    score(median, "median");

    if (ids.size() <= policy.sampled_points) {
        for (PointId id : ids) {
            auto row = ds[id];
            score(Point(row.begin(), row.end()), "point:" + std::to_string(id));
        }
    } else {
        std::vector<PointId> pool(ids.begin(), ids.end());
        for (std::size_t k = 0; k < policy.sampled_points; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
            std::swap(pool[k], pool[pick(rng)]);
            auto row = ds[pool[k]];
            score(Point(row.begin(), row.end()), "point:" + std::to_string(pool[k]));
        }
    }

    detail::CompensatedSum spread_acc;
    for (PointId id : ids) {
        spread_acc += detail::lp_distance_unchecked(ds[id], median, p);
    }
    const double spread = spread_acc.value() / static_cast<double>(ids.size());
    if (spread > 0.0 && policy.scale_octaves > 0) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        Point dir(d);
        for (std::size_t i = 0; i < policy.perturbations; ++i) {
            double norm = 0.0;
            while (norm == 0.0) {
                for (double& v : dir) {
                    v = gauss(rng);
                }
                norm = detail::lp_norm_unchecked(dir, p);
            }
            const int k = static_cast<int>(i % static_cast<std::size_t>(policy.scale_octaves));
            const double radius = spread * std::ldexp(1.0, k - 8);
            Point z = median;
            for (std::size_t j = 0; j < d; ++j) {
                z[j] += radius * dir[j] / norm;
            }
            score(std::move(z), "median+2^" + std::to_string(k - 8) + "*spread");
        }
    }
    return res;
}

inline CenterScanResult center_scan(const Dataset& ds, Rng& rng, const CenterCandidatePolicy& policy = {}) {
    const auto ids = ds.all_ids();
    return center_scan(ds, ids, rng, policy);
}

struct EmbedVerifyReport {
    double max_lip_ratio = 0.0;
    double noncontraction_ratio_C = 0.0;
    std::size_t pairs_probed = 0;
    bool passed_lipschitz = false;
    bool passed_noncontraction = false;
};

/// Relative slack on the Lipschitz bound D = p + 1.
inline constexpr double kLipschitzSlack = 1e-9;
/// Absolute slack on C_emp >= 1 (covers rounding at p = 2, where C = 1).
inline constexpr double kNoncontractionSlack = 1e-12;

/// Checks both average-embedding conditions on `ids`: the Lipschitz ratio
/// over all dataset pairs plus `n_pairs` random pairs near the data, and
/// the non-contraction C_emp >= 1.
inline EmbedVerifyReport verify_average_embedding(const Dataset& ds, std::span<const PointId> ids,
                                                  const AvgEmbedding& emb, std::size_t n_pairs,
                                                  Rng& rng) {
    if (ids.size() < 2) {
        throw InvalidInput("verify_average_embedding needs at least 2 points");
    }
    EmbedVerifyReport rep;
    rep.noncontraction_ratio_C = noncontraction_ratio(ds, ids, emb);

    const std::size_t d = ds.dim();
    const auto rows = detail::embed_all(ds, ids, emb);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            const double dx = ds.distance(ids[i], ids[j]);
            if (dx == 0.0) {
                continue;
            }
            const double dy = detail::l2_distance(std::span<const double>(rows.data() + i * d, d),
                                                  std::span<const double>(rows.data() + j * d, d));
            rep.max_lip_ratio = std::max(rep.max_lip_ratio, dy / dx);
            ++rep.pairs_probed;
        }
    }

    if (n_pairs > 0) {
        // Typical per-coordinate spread of the data sets the perturbation size.
        const double spread =
            std::sqrt(detail::lp_pair_sum_sq(ds, ids) /
                      (static_cast<double>(ids.size()) * static_cast<double>(ids.size()) *
                       static_cast<double>(d)));
        const double base = spread > 0.0 ? spread : 1.0;
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
        std::uniform_int_distribution<int> octave(-2, 0);
        auto sampler = [&]() {
            const double s = base * std::pow(10.0, octave(rng));
            auto a = ds[ids[pick(rng)]];
            Point x(a.begin(), a.end());
            Point y;
            if (rng() & 1U) {
                auto b = ds[ids[pick(rng)]];
                y.assign(b.begin(), b.end());
            } else {
                y = x;
            }
            for (std::size_t j = 0; j < d; ++j) {
                x[j] += s * gauss(rng);
                y[j] += s * gauss(rng);
            }
            return std::pair<Point, Point>{std::move(x), std::move(y)};
        };
        const auto probe = lipschitz_probe(emb, sampler, n_pairs);
        rep.max_lip_ratio = std::max(rep.max_lip_ratio, probe.max_ratio);
        rep.pairs_probed += probe.pairs_evaluated;
    }
    rep.passed_lipschitz = rep.max_lip_ratio <= emb.lip_const() * (1.0 + kLipschitzSlack);
    rep.passed_noncontraction = rep.noncontraction_ratio_C >= 1.0 - kNoncontractionSlack;
    return rep;
}

inline EmbedVerifyReport verify_average_embedding(const Dataset& ds, const AvgEmbedding& emb,
                                                  std::size_t n_pairs, Rng& rng) {
    const auto ids = ds.all_ids();
    return verify_average_embedding(ds, ids, emb, n_pairs, rng);
}

} // namespace avgann
