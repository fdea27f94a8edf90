#pragma once

// Ground truth, planted instance generation and forest evaluation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "avgann/detail/numeric.hpp"
#include "avgann/detail/rng.hpp"
#include "avgann/errors.hpp"
#include "avgann/forest.hpp"
#include "avgann/metric.hpp"

namespace avgann {

/// Exact nearest neighbor; ties go to the smallest id.
inline QueryResult brute_force_nn(const Dataset& ds, std::span<const double> q) {
    if (ds.empty()) {
        throw InvalidInput("brute_force_nn: empty dataset");
    }
    detail::check_query(ds, q);
    QueryResult best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double d = detail::lp_distance_unchecked(q, ds[i], ds.p_exp());
        if (d < best.distance) {
            best = {static_cast<PointId>(i), d};
        }
    }
    return best;
}

struct TruthEntry {
    std::uint32_t query_id = 0;
    PointId nn_id = 0;
    double distance = 0.0;

    bool operator==(const TruthEntry&) const = default;
};

struct PlantedInstance {
    Dataset dataset;
    Dataset queries;  // same dimension and exponent as `dataset`
    std::vector<TruthEntry> truth;
    BoundedInstanceParams bounds;
};

inline constexpr std::size_t kRejectionBudgetPerPoint = 50;

/// Points on the l_p sphere of radius 0.45 * beta * c * r (so no pair is
/// farther than beta * c * r), resampling any point closer than r to an
/// earlier one. Each query perturbs a random dataset point by an l_p
/// offset of length in (0, r]. r = 1, beta = 18 and c comes from
/// derive_params(p, eps, n).
inline PlantedInstance plant_instance(std::size_t n, std::size_t d, double p_exp, double eps, std::uint64_t seed,
                                      std::size_t n_queries = 100) {
    if (n < 2 || d < 2) {
        throw InvalidParameter("plant_instance: need n >= 2 and d >= 2");
    }
    const IndexParams ip = derive_params(p_exp, eps, n);
    PlantedInstance inst;
    inst.bounds = {ip.r, ip.c_approx, ip.beta};
    const double radius = 0.45 * inst.bounds.upper();
    inst.dataset = Dataset(d, p_exp);
    inst.queries = Dataset(d, p_exp);

    Rng rng(derive_seed(seed, 0));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_direction = [&](Point& v) {
        double norm = 0.0;
        while (norm == 0.0) {
            for (double& x : v) {
                x = gauss(rng);
            }
            norm = detail::lp_norm_unchecked(v, p_exp);
        }
        for (double& x : v) {
            x /= norm;
        }
    };

    Point cand(d);
    std::size_t attempts = 0;
    while (inst.dataset.size() < n) {
        if (++attempts > kRejectionBudgetPerPoint * n) {
            throw GenerationError("plant_instance: rejection budget exhausted after " + std::to_string(attempts - 1) +
                                  " draws; lower n or raise d");
        }
        random_direction(cand);
        for (double& x : cand) {
            x *= radius;
        }
        bool ok = true;
        for (std::size_t i = 0; i < inst.dataset.size() && ok; ++i) {
            ok = detail::lp_distance_unchecked(cand, inst.dataset[i], p_exp) >= ip.r;
        }
        if (ok) {
            inst.dataset.push_back(cand);
        }
    }
    if (!is_beta_bounded(inst.dataset, inst.bounds)) {
        throw GenerationError("plant_instance: generated dataset is not beta-bounded");
    }

    Rng qrng(derive_seed(seed, 1));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Point dir(d);
    Point q(d);
    for (std::size_t k = 0; k < n_queries; ++k) {
        const std::size_t id = pick(qrng);
        double norm = 0.0;
        while (norm == 0.0) {
            for (double& x : dir) {
                x = gauss(qrng);
            }
            norm = detail::lp_norm_unchecked(dir, p_exp);
        }
        double len = ip.r * (1.0 - unit(qrng));  // (0, r]
        double dist = 0.0;
        for (;;) {
            for (std::size_t j = 0; j < d; ++j) {
                q[j] = inst.dataset[id][j] + len * dir[j] / norm;
            }
            dist = detail::lp_distance_unchecked(q, inst.dataset[id], p_exp);
            if (dist <= ip.r) {
                break;
            }
            len *= 1.0 - 1e-9;
        }
        inst.queries.push_back(q);
        inst.truth.push_back({static_cast<std::uint32_t>(k), static_cast<PointId>(id), dist});
    }
    return inst;
}

struct EvalReport {
    std::size_t n_queries = 0;
    double success_rate = 0.0;
    bool all_within_c = true;
    /// brute-force NN distance <= returned distance on every answered query
    bool oracle_consistent = true;
    double ratio_mean = 0.0;
    double ratio_max = 0.0;
    /// Queries whose true NN distance is 0; excluded from the ratio stats.
    std::size_t zero_distance_queries = 0;
    double build_ms = 0.0;
    double mean_query_us = 0.0;
    double median_query_us = 0.0;
    std::size_t partition_nodes = 0;
    double c_emp_min = 0.0;
    double c_emp_mean = 0.0;
    double c_emp_max = 0.0;
    std::size_t c_emp_below_one = 0;
    double c_approx = 0.0;
    std::size_t n_trees = 0;
};

struct QueryOutcome {
    std::optional<QueryResult> answer;
    QueryResult truth;
};

/// Runs every query through the forest and the brute-force oracle.
inline EvalReport evaluate(const Forest& forest, const Dataset& queries,
                           std::vector<QueryOutcome>* outcomes = nullptr) {
    const Dataset& ds = *forest.dataset;
    if (!queries.empty() && queries.dim() != ds.dim()) {
        throw InvalidInput("evaluate: dimension mismatch between queries (" + std::to_string(queries.dim()) +
                           ") and index (" + std::to_string(ds.dim()) + ")");
    }
    EvalReport rep;
    rep.n_queries = queries.size();
    rep.build_ms = forest.stats.build_ms;
    rep.c_approx = forest.params.c_approx;
    rep.n_trees = forest.trees.size();

    const auto c_emps = forest.partition_c_emp();
    rep.partition_nodes = c_emps.size();
    if (!c_emps.empty()) {
        detail::CompensatedSum s;
        rep.c_emp_min = *std::min_element(c_emps.begin(), c_emps.end());
        rep.c_emp_max = *std::max_element(c_emps.begin(), c_emps.end());
        for (double c : c_emps) {
            s += c;
            rep.c_emp_below_one += c < 1.0 ? 1 : 0;
        }
        rep.c_emp_mean = s.value() / static_cast<double>(c_emps.size());
    }

    const double limit = forest.params.answer_radius();
    std::size_t found = 0;
    std::size_t ratio_count = 0;
    detail::CompensatedSum ratio_sum;
    std::vector<double> times_us;
    times_us.reserve(queries.size());
    for (std::size_t k = 0; k < queries.size(); ++k) {
        const auto q = queries[k];
        const auto t0 = std::chrono::steady_clock::now();
        const auto ans = query_forest(forest, q);
        times_us.push_back(std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count());
        const QueryResult truth = brute_force_nn(ds, q);
        if (outcomes != nullptr) {
            outcomes->push_back({ans, truth});
        }
        if (!ans) {
            continue;
        }
        ++found;
        const double d = lp_distance(q, ds[ans->id], ds.p_exp());
        rep.all_within_c = rep.all_within_c && d <= limit;
        rep.oracle_consistent = rep.oracle_consistent && truth.distance <= d;
        if (truth.distance == 0.0) {
            ++rep.zero_distance_queries;
            continue;
        }
        const double ratio = d / truth.distance;
        ratio_sum += ratio;
        rep.ratio_max = std::max(rep.ratio_max, ratio);
        ++ratio_count;
    }
    if (rep.n_queries > 0) {
        rep.success_rate = static_cast<double>(found) / static_cast<double>(rep.n_queries);
        detail::CompensatedSum t;
        for (double v : times_us) {
            t += v;
        }
        rep.mean_query_us = t.value() / static_cast<double>(times_us.size());
        std::sort(times_us.begin(), times_us.end());
        const std::size_t m = times_us.size();
        rep.median_query_us = m % 2 == 1 ? times_us[m / 2] : 0.5 * (times_us[m / 2 - 1] + times_us[m / 2]);
    }
    if (ratio_count > 0) {
        rep.ratio_mean = ratio_sum.value() / static_cast<double>(ratio_count);
    }
    return rep;
}

inline EvalReport evaluate(const Forest& forest, const PlantedInstance& inst,
                           std::vector<QueryOutcome>* outcomes = nullptr) {
    return evaluate(forest, inst.queries, outcomes);
}

} // namespace avgann
