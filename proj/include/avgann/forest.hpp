#pragma once

// Data-dependent ANN index over l_p built from the Mazur average embedding
// and p-stable LSH. Each tree recursively splits its point set with two
// node kinds:
//
//   * ball node: some x0 has more than a 1/8 fraction of the points within
//     lambda*D. Store x0 and a representative p0, recurse on the rest.
//   * partition node: embed the points with f(. - z), hash them with one
//     LSH function at scale (D, wD) and recurse into each non-empty bucket.
//
// A forest is n_trees independently seeded trees; a query walks each tree
// until one returns a point within c*r.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "avgann/detail/rng.hpp"
#include "avgann/errors.hpp"
#include "avgann/lsh.hpp"
#include "avgann/mazur.hpp"
#include "avgann/metric.hpp"

namespace avgann {

struct IndexParams {
    double p_exp = 2.0;
    double eps = 0.5;
    double D = 3.0;          // Lipschitz constant of the embedding, p + 1
    double lambda = 0.0;
    double w = 0.0;
    double c_approx = 0.0;
    double beta = 18.0;
    double r = 1.0;
    double dense_frac = 0.125;
    std::uint32_t leaf_size = 8;
    std::uint32_t max_depth = 0;
    std::uint32_t n_trees = 1;
    double lsh_width = 0.0;
    double p1 = 0.0;
    double p2 = 0.0;
    std::uint64_t seed = 0;

    [[nodiscard]] double ball_radius() const noexcept { return lambda * D * r; }
    /// Query-time ball check: a neighbor within r of q that was peeled into
    /// B(x0, lambda*D) forces d(q, x0) <= lambda*D + r.
    [[nodiscard]] double ball_query_radius() const noexcept { return lambda * D * r + r; }
    [[nodiscard]] double answer_radius() const noexcept { return c_approx * r; }
    [[nodiscard]] double lsh_near() const noexcept { return D * r; }
    [[nodiscard]] double lsh_far() const noexcept { return w * D * r; }

    void validate() const {
        if (!(p_exp >= 2.0) || !(eps > 0.0 && eps <= 1.0) || !(r > 0.0)) {
            throw InvalidParameter("index params: need p >= 2, 0 < eps <= 1, r > 0");
        }
        if (!((1.0 - dense_frac) * lambda * lambda >= 8.0 * w * w)) {
            throw InvalidParameter("index params: (1 - dense_frac) * lambda^2 >= 8 w^2 violated");
        }
        if (!(beta * c_approx >= lambda)) {
            throw InvalidParameter("index params: beta * c >= lambda violated");
        }
        if (!(lsh_width > 0.0) || n_trees == 0 || leaf_size == 0 || max_depth == 0) {
            throw InvalidParameter("index params: width, tree count, leaf size and depth cap must be positive");
        }
    }

    bool operator==(const IndexParams&) const = default;
};

inline constexpr int kFixedPointMaxIterations = 20;
inline constexpr double kFixedPointTolerance = 1e-9;

/// All index constants for exponent p, accuracy eps and dataset size n:
/// D = p + 1, w = 4 D^2 / eps, lambda = 4 w, c = 3 lambda D, and (p1, p2, W)
/// from the fixed point p1 = 1 - eps (1 - p2) / D^2 with W calibrated so
/// that the collision probability at distance D is p1 and p2 is taken at wD.
inline IndexParams derive_params(double p_exp, double eps, std::size_t n, std::uint64_t seed = 0,
                                 std::vector<std::string>* warnings = nullptr) {
    if (!(p_exp >= 2.0) || !std::isfinite(p_exp)) {
        throw InvalidParameter("derive_params: p must be finite and >= 2");
    }
    if (!(eps > 0.0 && eps <= 1.0)) {
        throw InvalidParameter("derive_params: eps must lie in (0, 1]");
    }
    if (n < 2) {
        throw InvalidParameter("derive_params: n must be >= 2");
    }
    IndexParams ip;
    ip.p_exp = p_exp;
    ip.eps = eps;
    ip.D = p_exp + 1.0;
    ip.w = 4.0 * ip.D * ip.D / eps;
    ip.lambda = 4.0 * ip.w;
    ip.c_approx = 3.0 * ip.lambda * ip.D;
    ip.seed = seed;
    const double nn = static_cast<double>(n);
    ip.n_trees = static_cast<std::uint32_t>(std::ceil(3.0 * std::pow(nn, eps) - 1e-9));
    ip.max_depth = static_cast<std::uint32_t>(std::ceil(100.0 * std::log(nn)));
    ip.leaf_size = 8;

    double p1 = 0.99;
    bool converged = false;
    for (int it = 0; it < kFixedPointMaxIterations; ++it) {
        const double width = calibrate_width(ip.lsh_near(), p1);
        const double p2 = collision_probability(width, ip.lsh_far());
        const double next = 1.0 - eps * (1.0 - p2) / (ip.D * ip.D);
        const double delta = std::abs(next - p1);
        p1 = next;
        if (delta < kFixedPointTolerance) {
            converged = true;
            break;
        }
    }
    if (!converged && warnings != nullptr) {
        warnings->push_back("derive_params: p1/p2 fixed point did not converge in 20 iterations");
    }
    ip.p1 = p1;
    ip.lsh_width = calibrate_width(ip.lsh_near(), p1);
    ip.p2 = collision_probability(ip.lsh_width, ip.lsh_far());
    ip.validate();
    return ip;
}

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct BallNode {
    PointId center = 0;
    PointId representative = 0;
    NodeId child = kNoNode;

    bool operator==(const BallNode&) const = default;
};

struct PartitionNode {
    AvgEmbedding embedding;
    LshFunction hash;
    double c_emp = 0.0;
    /// Non-empty buckets only, sorted by bucket id.
    std::vector<std::pair<BucketId, NodeId>> children;

    [[nodiscard]] NodeId child_for(BucketId k) const noexcept {
        auto it = std::lower_bound(children.begin(), children.end(), k,
                                   [](const auto& e, BucketId key) { return e.first < key; });
        return (it != children.end() && it->first == k) ? it->second : kNoNode;
    }

    bool operator==(const PartitionNode&) const = default;
};

struct LeafNode {
    std::vector<PointId> points;

    bool operator==(const LeafNode&) const = default;
};

using TreeNode = std::variant<BallNode, PartitionNode, LeafNode>;

/// Nodes in an arena; the root is nodes[0].
struct Tree {
    std::vector<TreeNode> nodes;

    [[nodiscard]] std::size_t depth() const {
        if (nodes.empty()) {
            return 0;
        }
        std::size_t best = 0;
        std::vector<std::pair<NodeId, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [id, dep] = stack.back();
            stack.pop_back();
            best = std::max(best, dep);
            if (const auto* b = std::get_if<BallNode>(&nodes[id]); b != nullptr && b->child != kNoNode) {
                stack.emplace_back(b->child, dep + 1);
            } else if (const auto* pn = std::get_if<PartitionNode>(&nodes[id])) {
                for (const auto& [k, c] : pn->children) {
                    stack.emplace_back(c, dep + 1);
                }
            }
        }
        return best;
    }

    bool operator==(const Tree&) const = default;
};

/// Smallest-id x0 in `ids` (sorted ascending) whose closed ball of `radius`
/// holds more than dense_frac * |ids| points of `ids`.
inline std::optional<PointId> find_dense_center(const Dataset& ds, std::span<const PointId> ids,
                                                double radius, double dense_frac = 0.125) {
    const std::size_t m = ids.size();
    if (m == 0) {
        return std::nullopt;
    }
    const double need = dense_frac * static_cast<double>(m);
    std::vector<std::uint32_t> count(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            if (ds.distance(ids[i], ids[j]) <= radius) {
                ++count[i];
                ++count[j];
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (static_cast<double>(count[i]) > need) {
            return ids[i];
        }
    }
    return std::nullopt;
}

inline constexpr int kHashRetries = 3;

/// Results computed once per forest for the full id set (the root of every
/// tree). Purely a cache: trees are identical with or without it.
struct RootCache {
    std::size_t n = 0;
    std::optional<PointId> dense_center;
    std::optional<double> lp_sum_sq;
};

inline RootCache make_root_cache(const Dataset& ds, const IndexParams& params) {
    RootCache rc;
    rc.n = ds.size();
    const auto ids = ds.all_ids();
    rc.dense_center = find_dense_center(ds, ids, params.ball_radius(), params.dense_frac);
    if (!rc.dense_center && ids.size() >= 2) {
        rc.lp_sum_sq = detail::lp_pair_sum_sq(ds, ids);
    }
    return rc;
}

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const Dataset& ds, const IndexParams& params, Rng& rng, std::vector<std::string>& warnings,
                const RootCache* cache)
        : ds_(ds), params_(params), rng_(rng), warnings_(warnings), cache_(cache) {}

    Tree build(std::vector<PointId> ids) {
        std::sort(ids.begin(), ids.end());
        build_node(std::move(ids), 0);
        return std::move(tree_);
    }

private:
    NodeId push(TreeNode node) {
        tree_.nodes.push_back(std::move(node));
        return static_cast<NodeId>(tree_.nodes.size() - 1);
    }

    void warn(std::size_t depth, const std::string& msg) {
        warnings_.push_back("depth " + std::to_string(depth) + ": " + msg);
    }

    [[nodiscard]] bool is_root_set(std::span<const PointId> ids) const {
        return cache_ != nullptr && cache_->n == ds_.size() && ids.size() == ds_.size();
    }

    NodeId build_node(std::vector<PointId> ids, std::size_t depth) {
        if (ids.size() <= params_.leaf_size || depth >= params_.max_depth) {
            return push(LeafNode{std::move(ids)});
        }
        const bool root = is_root_set(ids);
        const auto dense = root ? cache_->dense_center
                                : find_dense_center(ds_, ids, params_.ball_radius(), params_.dense_frac);
        if (dense) {
            return build_ball(std::move(ids), *dense, depth);
        }
        return build_partition(std::move(ids), depth, root ? cache_->lp_sum_sq : std::nullopt);
    }

    NodeId build_ball(std::vector<PointId> ids, PointId x0, std::size_t depth) {
        const double radius = params_.ball_radius();
        std::vector<PointId> rest;
        PointId p0 = x0;
        double best = std::numeric_limits<double>::infinity();
        for (PointId id : ids) {
            const double d = ds_.distance(x0, id);
            if (d <= radius) {
                if (d < best) {
                    best = d;
                    p0 = id;
                }
            } else {
                rest.push_back(id);
            }
        }
        const NodeId self = push(BallNode{x0, p0, kNoNode});
        if (!rest.empty()) {
            const NodeId child = build_node(std::move(rest), depth + 1);
            std::get<BallNode>(tree_.nodes[self]).child = child;
        }
        return self;
    }

    NodeId build_partition(std::vector<PointId> ids, std::size_t depth, std::optional<double> lp_sum_sq) {
        CenterScanResult scan;
        try {
            scan = center_scan(ds_, ids, rng_, CenterCandidatePolicy{}, lp_sum_sq);
        } catch (const UndefinedRatio&) {
            warn(depth, "degenerate point set for the embedding; forced leaf of " +
                            std::to_string(ids.size()) + " points");
            return push(LeafNode{std::move(ids)});
        }
        if (scan.best_C < 1.0) {
            warn(depth, "embedding contracts on average (C_emp = " + std::to_string(scan.best_C) +
                            " < 1) over " + std::to_string(ids.size()) + " points");
        }
        AvgEmbedding emb(ds_.p_exp(), std::move(scan.best_z));
        const std::size_t d = ds_.dim();
        const auto rows = embed_all(ds_, ids, emb);

        std::vector<std::pair<BucketId, PointId>> keyed(ids.size());
        for (int attempt = 0; attempt <= kHashRetries; ++attempt) {
            LshFunction h = sample_lsh(d, params_.lsh_width, rng_);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                keyed[k] = {lsh_bucket(h, std::span<const double>(rows.data() + k * d, d)), ids[k]};
            }
            std::sort(keyed.begin(), keyed.end());
            if (keyed.front().first == keyed.back().first) {
                continue;
            }
            const NodeId self = push(PartitionNode{std::move(emb), std::move(h), scan.best_C, {}});
            std::vector<std::pair<BucketId, NodeId>> children;
            std::size_t begin = 0;
            while (begin < keyed.size()) {
                std::size_t end = begin;
                std::vector<PointId> part;
                while (end < keyed.size() && keyed[end].first == keyed[begin].first) {
                    part.push_back(keyed[end].second);
                    ++end;
                }
                children.emplace_back(keyed[begin].first, build_node(std::move(part), depth + 1));
                begin = end;
            }
            std::get<PartitionNode>(tree_.nodes[self]).children = std::move(children);
            return self;
        }
        warn(depth, "all points hashed to one bucket after " + std::to_string(kHashRetries) +
                        " resamples; forced leaf of " + std::to_string(ids.size()) + " points");
        return push(LeafNode{std::move(ids)});
    }

    const Dataset& ds_;
    const IndexParams& params_;
    Rng& rng_;
    std::vector<std::string>& warnings_;
    const RootCache* cache_;
    Tree tree_;
};

} // namespace detail

/// One randomized tree over `ids`; deterministic given the stream state.
inline Tree build_tree(const Dataset& ds, std::vector<PointId> ids, const IndexParams& params, Rng& rng,
                       std::vector<std::string>* warnings = nullptr, const RootCache* cache = nullptr) {
    if (ids.empty()) {
        throw InvalidInput("build_tree: empty point set");
    }
    std::vector<std::string> local;
    detail::TreeBuilder builder(ds, params, rng, warnings != nullptr ? *warnings : local, cache);
    return builder.build(std::move(ids));
}

struct BuildStats {
    double build_ms = 0.0;
    std::vector<std::string> warnings;
};

struct Forest {
    IndexParams params;
    std::shared_ptr<const Dataset> dataset;
    std::vector<Tree> trees;
    BuildStats stats;

    /// Same parameters, data and tree structures (timings and log ignored).
    [[nodiscard]] bool same_structure(const Forest& other) const {
        return params == other.params && dataset && other.dataset && *dataset == *other.dataset &&
               trees == other.trees;
    }

    /// C_emp of every partition node, tree by tree in arena order.
    [[nodiscard]] std::vector<double> partition_c_emp() const {
        std::vector<double> out;
        for (const auto& t : trees) {
            for (const auto& n : t.nodes) {
                if (const auto* pn = std::get_if<PartitionNode>(&n)) {
                    out.push_back(pn->c_emp);
                }
            }
        }
        return out;
    }
};

/// Builds params.n_trees trees; tree t uses the stream
/// Rng(derive_seed(params.seed, t)), so the result does not depend on how
/// trees are spread over `threads` workers (0 = hardware concurrency).
inline Forest build_forest(std::shared_ptr<const Dataset> dataset, const IndexParams& params,
                           unsigned threads = 0) {
    if (!dataset || dataset->empty()) {
        throw InvalidInput("build_forest: empty dataset");
    }
    if (dataset->p_exp() != params.p_exp) {
        throw InvalidInput("build_forest: dataset exponent does not match index parameters");
    }
    params.validate();
    const auto t0 = std::chrono::steady_clock::now();

    Forest forest;
    forest.params = params;
    forest.dataset = dataset;
    const Dataset& ds = *dataset;
    if (ds.size() >= 2 && !is_beta_bounded(ds, {params.r, params.c_approx, params.beta})) {
        forest.stats.warnings.push_back("dataset is not beta-bounded at (r, c, beta); guarantees on recall do not apply");
    }

    const RootCache cache = make_root_cache(ds, params);
    const std::size_t n_trees = params.n_trees;
    forest.trees.resize(n_trees);
    std::vector<std::vector<std::string>> tree_warnings(n_trees);

    if (threads == 0) {
        threads = std::max(1U, std::thread::hardware_concurrency());
    }
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_trees));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&]() {
        for (std::size_t t = next++; t < n_trees; t = next++) {
            try {
                Rng rng(derive_seed(params.seed, t));
                forest.trees[t] = build_tree(ds, ds.all_ids(), params, rng, &tree_warnings[t], &cache);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    for (std::size_t t = 0; t < n_trees; ++t) {
        for (auto& w : tree_warnings[t]) {
            forest.stats.warnings.push_back("tree " + std::to_string(t) + ", " + w);
        }
    }
    forest.stats.build_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return forest;
}

struct QueryResult {
    PointId id = 0;
    double distance = 0.0;

    bool operator==(const QueryResult&) const = default;
};

struct QueryTrace {
    std::size_t nodes_visited = 0;
    std::size_t trees_probed = 0;
};

namespace detail {

inline std::optional<QueryResult> query_tree_unchecked(const Tree& tree, const Dataset& ds,
                                                       const IndexParams& params, std::span<const double> q,
                                                       std::span<double> scratch, QueryTrace* trace) {
    const double answer = params.answer_radius();
    NodeId node = tree.nodes.empty() ? kNoNode : 0;
    while (node != kNoNode) {
        if (trace != nullptr) {
            ++trace->nodes_visited;
        }
        const TreeNode& tn = tree.nodes[node];
        if (const auto* ball = std::get_if<BallNode>(&tn)) {
            if (lp_distance_unchecked(q, ds[ball->center], params.p_exp) <= params.ball_query_radius()) {
                const double d = lp_distance_unchecked(q, ds[ball->representative], params.p_exp);
                if (d <= answer) {
                    return QueryResult{ball->representative, d};
                }
            }
            node = ball->child;
        } else if (const auto* part = std::get_if<PartitionNode>(&tn)) {
            part->embedding.embed_into(q, scratch);
            node = part->child_for(lsh_bucket(part->hash, scratch));
        } else {
            const auto& leaf = std::get<LeafNode>(tn);
            std::optional<QueryResult> best;
            for (PointId id : leaf.points) {
                const double d = lp_distance_unchecked(q, ds[id], params.p_exp);
                if (!best || d < best->distance || (d == best->distance && id < best->id)) {
                    best = QueryResult{id, d};
                }
            }
            if (best && best->distance <= answer) {
                return best;
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

inline void check_query(const Dataset& ds, std::span<const double> q) {
    if (q.size() != ds.dim()) {
        throw InvalidInput("query dimension " + std::to_string(q.size()) + " does not match index dimension " +
                           std::to_string(ds.dim()));
    }
    require_finite(q, "query");
}

} // namespace detail

/// Walks one tree. Any returned point lies within c_approx * r of q.
inline std::optional<QueryResult> query_tree(const Tree& tree, std::span<const double> q, const IndexParams& params,
                                             const Dataset& ds, QueryTrace* trace = nullptr) {
    detail::check_query(ds, q);
    Point scratch(ds.dim());
    return detail::query_tree_unchecked(tree, ds, params, q, scratch, trace);
}

/// Trees in order; first valid answer wins.
inline std::optional<QueryResult> query_forest(const Forest& forest, std::span<const double> q,
                                               QueryTrace* trace = nullptr) {
    const Dataset& ds = *forest.dataset;
    detail::check_query(ds, q);
    Point scratch(ds.dim());
    for (const auto& tree : forest.trees) {
        if (trace != nullptr) {
            ++trace->trees_probed;
        }
        if (auto res = detail::query_tree_unchecked(tree, ds, forest.params, q, scratch, trace)) {
            return res;
        }
    }
    return std::nullopt;
}

struct LemmaCheck {
    double alpha = 0.0;
    double bound = 0.0;
    bool hypotheses_met = false;
    bool holds = true;
    // Individual hypotheses, for diagnostics.
    bool no_dense_center = false;
    bool diameter_ok = false;
    EmbedVerifyReport embedding;
};

/// alpha = fraction of `ids` with ||f(x - z) - f(q - z)||_2 <= wD, checked
/// against 1 - (1 - dense_frac) lambda^2 / (4 beta^2 c^2) whenever the
/// hypotheses hold: no dense ball of radius lambda*D, diameter <= beta*c*r
/// and `emb` passes verify_average_embedding.
inline LemmaCheck lemma_alpha_check(const Dataset& ds, std::span<const PointId> ids, std::span<const double> q,
                                    const AvgEmbedding& emb, const IndexParams& params, std::size_t n_pairs,
                                    Rng& rng) {
    if (ids.size() < 2) {
        throw InvalidInput("lemma_alpha_check needs at least 2 points");
    }
    detail::check_query(ds, q);
    bool near = false;
    for (PointId id : ids) {
        near = near || detail::lp_distance_unchecked(q, ds[id], ds.p_exp()) <= params.r;
    }
    if (!near) {
        throw InvalidInput("lemma_alpha_check: query has no point within r");
    }

    LemmaCheck lc;
    const double c = params.c_approx;
    lc.bound = 1.0 - (1.0 - params.dense_frac) * params.lambda * params.lambda /
                         (4.0 * params.beta * params.beta * c * c);

    const std::size_t d = ds.dim();
    Point fq(d);
    emb.embed_into(q, fq);
    const auto rows = detail::embed_all(ds, ids, emb);
    const double radius = params.w * params.D * params.r;
    std::size_t inside = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (detail::l2_distance(std::span<const double>(rows.data() + k * d, d), fq) <= radius) {
            ++inside;
        }
    }
    lc.alpha = static_cast<double>(inside) / static_cast<double>(ids.size());

    lc.no_dense_center = !find_dense_center(ds, ids, params.ball_radius(), params.dense_frac);
    lc.diameter_ok = pairwise_distance_stats(ds, ids).max <= params.beta * c * params.r;
    lc.embedding = verify_average_embedding(ds, ids, emb, n_pairs, rng);
    lc.hypotheses_met = lc.no_dense_center && lc.diameter_ok && lc.embedding.passed_lipschitz &&
                        lc.embedding.passed_noncontraction;
    lc.holds = !lc.hypotheses_met || lc.alpha <= lc.bound + 1e-12;
    return lc;
}

struct TreeAudit {
    bool ok = true;
    std::string problem;
    std::size_t leaf_points = 0;
    std::size_t ball_covered = 0;
    std::size_t depth = 0;
};

/// Replays the construction: ball nodes must peel exactly the points within
/// lambda*D of x0, partition children must be exact hash preimages, leaves
/// must hold exactly the points routed to them, and every point must end up
/// in one leaf or one ball.
inline TreeAudit audit_tree(const Tree& tree, const Dataset& ds, const IndexParams& params) {
    TreeAudit audit;
    auto fail = [&](std::string msg) {
        if (audit.ok) {
            audit.ok = false;
            audit.problem = std::move(msg);
        }
    };
    if (tree.nodes.empty()) {
        fail("empty tree");
        return audit;
    }
    std::vector<std::uint32_t> seen(ds.size(), 0);
    std::vector<std::size_t> visits(tree.nodes.size(), 0);
    struct Item {
        NodeId node;
        std::vector<PointId> ids;
        std::size_t depth;
    };
    std::vector<Item> stack;
    stack.push_back({0, ds.all_ids(), 0});
    const std::size_t d = ds.dim();
    Point f(d);
    while (!stack.empty()) {
        Item it = std::move(stack.back());
        stack.pop_back();
        audit.depth = std::max(audit.depth, it.depth);
        if (it.node >= tree.nodes.size()) {
            fail("dangling node id");
            continue;
        }
        if (++visits[it.node] > 1) {
            fail("node reachable twice");
            continue;
        }
        const TreeNode& tn = tree.nodes[it.node];
        if (const auto* ball = std::get_if<BallNode>(&tn)) {
            std::vector<PointId> rest;
            bool has_rep = false;
            for (PointId id : it.ids) {
                if (ds.distance(ball->center, id) <= params.ball_radius()) {
                    ++seen[id];
                    ++audit.ball_covered;
                    has_rep = has_rep || id == ball->representative;
                } else {
                    rest.push_back(id);
                }
            }
            if (!has_rep) {
                fail("ball representative outside its ball");
            }
            if (ball->child == kNoNode) {
                if (!rest.empty()) {
                    fail("ball node drops points");
                }
            } else {
                stack.push_back({ball->child, std::move(rest), it.depth + 1});
            }
        } else if (const auto* part = std::get_if<PartitionNode>(&tn)) {
            std::vector<std::pair<BucketId, PointId>> keyed;
            for (PointId id : it.ids) {
                part->embedding.embed_into(ds[id], f);
                keyed.emplace_back(lsh_bucket(part->hash, f), id);
            }
            std::sort(keyed.begin(), keyed.end());
            std::size_t child_idx = 0;
            std::size_t begin = 0;
            while (begin < keyed.size()) {
                std::size_t end = begin;
                std::vector<PointId> part_ids;
                while (end < keyed.size() && keyed[end].first == keyed[begin].first) {
                    part_ids.push_back(keyed[end++].second);
                }
                if (child_idx >= part->children.size() || part->children[child_idx].first != keyed[begin].first) {
                    fail("partition children are not the exact non-empty buckets");
                    break;
                }
                stack.push_back({part->children[child_idx].second, std::move(part_ids), it.depth + 1});
                ++child_idx;
                begin = end;
            }
            if (child_idx != part->children.size()) {
                fail("partition node has an empty or extra bucket");
            }
        } else {
            const auto& leaf = std::get<LeafNode>(tn);
            if (leaf.points != it.ids) {
                fail("leaf contents differ from the routed point set");
            }
            for (PointId id : leaf.points) {
                ++seen[id];
                ++audit.leaf_points;
            }
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (seen[i] != 1) {
            fail("point " + std::to_string(i) + " covered " + std::to_string(seen[i]) + " times");
            break;
        }
    }
    if (audit.depth > params.max_depth) {
        fail("tree deeper than max_depth");
    }
    return audit;
}

} // namespace avgann
