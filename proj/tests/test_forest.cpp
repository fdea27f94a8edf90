#include <cmath>
#include <memory>
#include <random>
#include <variant>

#include <gtest/gtest.h>

#include "avgann/eval.hpp"
#include "avgann/forest.hpp"
#include "oracles.hpp"

using namespace avgann;

namespace {

Point gaussian(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, 1.0);
    Point x(d);
    for (auto& v : x) {
        v = scale * g(rng);
    }
    return x;
}

// Brute-force ball counting, independent of find_dense_center.
std::optional<PointId> dense_center_oracle(const std::vector<Point>& pts, double radius, double p) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t count = 0;
        for (const auto& q : pts) {
            count += oracle::lp_distance(pts[i], q, p) <= radius ? 1 : 0;
        }
        if (8 * count > pts.size()) {
            return static_cast<PointId>(i);
        }
    }
    return std::nullopt;
}

const PlantedInstance& small_instance() {
    static const PlantedInstance inst = plant_instance(400, 8, 4.0, 0.5, 21, 60);
    return inst;
}

IndexParams small_params(std::uint64_t seed = 5, std::uint32_t trees = 4) {
    IndexParams ip = derive_params(4.0, 0.5, small_instance().dataset.size(), seed);
    ip.n_trees = trees;
    return ip;
}

} // namespace

TEST(DeriveParams, P2Example) {
    const auto ip = derive_params(2.0, 0.5, 1000);
    EXPECT_EQ(ip.D, 3.0);
    EXPECT_DOUBLE_EQ(ip.w, 72.0);
    EXPECT_DOUBLE_EQ(ip.lambda, 288.0);
    EXPECT_DOUBLE_EQ(ip.c_approx, 2592.0);
    EXPECT_EQ(ip.beta, 18.0);
    EXPECT_EQ(ip.r, 1.0);
    EXPECT_EQ(ip.dense_frac, 0.125);
    EXPECT_EQ(ip.leaf_size, 8u);
}

TEST(DeriveParams, LinearInInverseEps) {
    const auto a = derive_params(4.0, 0.5, 1000);
    const auto b = derive_params(4.0, 0.25, 1000);
    EXPECT_DOUBLE_EQ(b.w, 2.0 * a.w);
    EXPECT_DOUBLE_EQ(b.lambda, 2.0 * a.lambda);
    EXPECT_DOUBLE_EQ(b.c_approx, 2.0 * a.c_approx);
}

TEST(DeriveParams, Invariants) {
    for (double p : {2.0, 3.0, 4.0, 8.0}) {
        for (double eps : {0.1, 0.5, 1.0}) {
            const auto ip = derive_params(p, eps, 500);
            EXPECT_DOUBLE_EQ((1.0 - ip.dense_frac) * ip.lambda * ip.lambda, 14.0 * ip.w * ip.w);
            EXPECT_GE(ip.beta * ip.c_approx, ip.lambda);
            EXPECT_DOUBLE_EQ(ip.c_approx, 3.0 * ip.lambda * ip.D);
            EXPECT_NEAR(collision_probability(ip.lsh_width, ip.D), ip.p1, 1e-9);
            EXPECT_DOUBLE_EQ(ip.p2, collision_probability(ip.lsh_width, ip.w * ip.D));
            EXPECT_NEAR(ip.p1, 1.0 - eps * (1.0 - ip.p2) / (ip.D * ip.D), 1e-8);
            EXPECT_GT(ip.p1, ip.p2);
            EXPECT_LE(2.0 * ip.lambda * ip.D + ip.r, ip.c_approx * ip.r);
        }
    }
}

TEST(DeriveParams, TreeCountAndDepthCap) {
    const auto ip = derive_params(4.0, 0.5, 4096);
    EXPECT_EQ(ip.n_trees, 192u);
    EXPECT_EQ(ip.max_depth, static_cast<std::uint32_t>(std::ceil(100.0 * std::log(4096.0))));
}

TEST(DeriveParams, Errors) {
    EXPECT_THROW(derive_params(1.5, 0.5, 10), InvalidParameter);
    EXPECT_THROW(derive_params(4.0, 0.0, 10), InvalidParameter);
    EXPECT_THROW(derive_params(4.0, 1.5, 10), InvalidParameter);
    EXPECT_THROW(derive_params(4.0, 0.5, 1), InvalidParameter);
}

TEST(FindDenseCenter, AllIdentical) {
    const Dataset ds(std::vector<Point>(9, Point{2.0, -1.0}), 4.0);
    const auto ids = ds.all_ids();
    EXPECT_EQ(find_dense_center(ds, ids, 1.0), PointId{0});
}

TEST(FindDenseCenter, SpreadOutHasNone) {
    std::vector<Point> pts;
    for (int i = 0; i < 12; ++i) {
        pts.push_back({10.0 * i, 0.0});
    }
    const Dataset ds(pts, 4.0);
    const auto ids = ds.all_ids();
    EXPECT_FALSE(find_dense_center(ds, ids, 4.0).has_value());
}

TEST(FindDenseCenter, PlantedClusterMatchesOracle) {
    std::mt19937_64 rng(3);
    const std::size_t n = 64;
    std::vector<Point> pts;
    for (std::size_t i = 0; i < n; ++i) {
        pts.push_back(gaussian(rng, 4, 100.0));
    }
    // Cluster of ceil(n/4) points around pts[20].
    for (std::size_t i = 30; i < 30 + (n + 3) / 4; ++i) {
        pts[i] = pts[20];
        pts[i][0] += 0.1 * static_cast<double>(i % 3);
    }
    const Dataset ds(pts, 4.0);
    const auto ids = ds.all_ids();
    const auto want = dense_center_oracle(pts, 1.0, 4.0);
    ASSERT_TRUE(want.has_value());
    EXPECT_EQ(find_dense_center(ds, ids, 1.0), want);
    EXPECT_EQ(*want, PointId{20});
}

TEST(BuildTree, SmallSetIsLeaf) {
    const Dataset ds({{0, 0}, {5, 5}, {9, 1}}, 4.0);
    auto ip = derive_params(4.0, 0.5, 3);
    Rng rng(1);
    const auto tree = build_tree(ds, ds.all_ids(), ip, rng);
    ASSERT_EQ(tree.nodes.size(), 1u);
    EXPECT_EQ(std::get<LeafNode>(tree.nodes[0]).points, (std::vector<PointId>{0, 1, 2}));
}

TEST(BuildTree, DominantClusterGivesBallRoot) {
    std::mt19937_64 rng(4);
    std::vector<Point> pts;
    for (int i = 0; i < 50; ++i) {
        pts.push_back(gaussian(rng, 6, 5.0));
    }
    for (int i = 0; i < 50; ++i) {
        auto x = gaussian(rng, 6);
        const double n = oracle::lp_norm(x, 4.0);
        for (auto& v : x) {
            v *= 1e5 / n;
        }
        pts.push_back(x);
    }
    const Dataset ds(pts, 4.0);
    const auto ip = derive_params(4.0, 0.5, ds.size());
    const auto want = dense_center_oracle(pts, ip.ball_radius(), 4.0);
    ASSERT_TRUE(want.has_value());
    Rng trng(2);
    const auto tree = build_tree(ds, ds.all_ids(), ip, trng);
    const auto* ball = std::get_if<BallNode>(&tree.nodes[0]);
    ASSERT_NE(ball, nullptr);
    EXPECT_EQ(ball->center, *want);
    EXPECT_LE(ds.distance(ball->center, ball->representative), ip.ball_radius());
    const auto audit = audit_tree(tree, ds, ip);
    EXPECT_TRUE(audit.ok) << audit.problem;
    EXPECT_EQ(audit.ball_covered + audit.leaf_points, ds.size());
}

TEST(BuildTree, StructuralAuditOnPlantedInstance) {
    const auto& inst = small_instance();
    const auto ip = small_params();
    for (std::uint64_t s = 0; s < 5; ++s) {
        Rng rng(s);
        const auto tree = build_tree(inst.dataset, inst.dataset.all_ids(), ip, rng);
        const auto audit = audit_tree(tree, inst.dataset, ip);
        EXPECT_TRUE(audit.ok) << audit.problem;
        EXPECT_EQ(audit.leaf_points + audit.ball_covered, inst.dataset.size());
        EXPECT_LE(tree.depth(), ip.max_depth);
        EXPECT_TRUE(std::holds_alternative<PartitionNode>(tree.nodes[0]));
    }
}

TEST(BuildTree, DepthCapForcesLeaves) {
    const auto& inst = small_instance();
    auto ip = small_params();
    ip.max_depth = 1;
    ip.lsh_width *= 50.0;  // coarse buckets so depth 1 is reached with big sets
    Rng rng(3);
    const auto tree = build_tree(inst.dataset, inst.dataset.all_ids(), ip, rng);
    EXPECT_LE(tree.depth(), 1u);
    const auto audit = audit_tree(tree, inst.dataset, ip);
    EXPECT_TRUE(audit.ok) << audit.problem;
}

TEST(BuildForest, SingleTreeMatchesBuildTree) {
    const auto& inst = small_instance();
    const auto ip = small_params(9, 1);
    const auto ds = std::make_shared<const Dataset>(inst.dataset);
    const Forest forest = build_forest(ds, ip);
    Rng rng(derive_seed(ip.seed, 0));
    const Tree tree = build_tree(*ds, ds->all_ids(), ip, rng);
    ASSERT_EQ(forest.trees.size(), 1u);
    EXPECT_EQ(forest.trees[0], tree);
}

TEST(BuildForest, DeterministicAcrossRunsAndThreads) {
    const auto& inst = small_instance();
    const auto ip = small_params(11, 6);
    const auto ds = std::make_shared<const Dataset>(inst.dataset);
    const Forest a = build_forest(ds, ip, 1);
    const Forest b = build_forest(ds, ip, 3);
    EXPECT_TRUE(a.same_structure(b));
    EXPECT_EQ(a.stats.warnings, b.stats.warnings);

    auto other = ip;
    other.seed = 12;
    const Forest c = build_forest(ds, other, 1);
    EXPECT_NE(a.trees, c.trees);
}

TEST(BuildForest, Errors) {
    const auto ip = small_params();
    EXPECT_THROW(build_forest(std::make_shared<const Dataset>(Dataset(3, 4.0)), ip), InvalidInput);
    EXPECT_THROW(build_forest(std::make_shared<const Dataset>(Dataset({{0, 1}, {2, 3}}, 3.0)), ip), InvalidInput);
}

TEST(BuildForest, WarnsOnUnboundedDataset) {
    const Dataset ds({{0, 0}, {0.1, 0}, {5, 5}}, 4.0);
    auto ip = derive_params(4.0, 0.5, ds.size());
    ip.n_trees = 1;
    const Forest f = build_forest(std::make_shared<const Dataset>(ds), ip);
    ASSERT_FALSE(f.stats.warnings.empty());
    EXPECT_NE(f.stats.warnings.front().find("beta-bounded"), std::string::npos);
}

TEST(QueryTree, ExactPointFound) {
    const auto& inst = small_instance();
    const auto ip = small_params();
    Rng rng(7);
    const auto tree = build_tree(inst.dataset, inst.dataset.all_ids(), ip, rng);
    for (std::size_t i = 0; i < inst.dataset.size(); i += 13) {
        const auto q = inst.dataset[i];
        const auto res = query_tree(tree, q, ip, inst.dataset);
        ASSERT_TRUE(res.has_value());
        EXPECT_EQ(res->id, i);
        EXPECT_EQ(res->distance, 0.0);
    }
}

TEST(QueryTree, FarQueryReturnsNothing) {
    const auto& inst = small_instance();
    const auto ip = small_params();
    Rng rng(8);
    const auto tree = build_tree(inst.dataset, inst.dataset.all_ids(), ip, rng);
    // The shell sits at radius 0.45 beta c r; the origin is farther than c r from all points.
    const Point origin(inst.dataset.dim(), 0.0);
    EXPECT_GT(brute_force_nn(inst.dataset, origin).distance, ip.answer_radius());
    EXPECT_FALSE(query_tree(tree, origin, ip, inst.dataset).has_value());
}

TEST(QueryTree, BallNodeAnswersNearbyQuery) {
    std::vector<Point> pts(20, Point{0.0, 0.0, 0.0});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i][0] = static_cast<double>(i);
    }
    const Dataset ds(pts, 4.0);
    const auto ip = derive_params(4.0, 0.5, ds.size());
    Rng rng(1);
    const auto tree = build_tree(ds, ds.all_ids(), ip, rng);
    ASSERT_TRUE(std::holds_alternative<BallNode>(tree.nodes[0]));
    const Point q{ip.ball_radius() * 0.5, 0.0, 0.0};
    const auto res = query_tree(tree, q, ip, ds);
    ASSERT_TRUE(res.has_value());
    EXPECT_EQ(res->id, std::get<BallNode>(tree.nodes[0]).representative);
    EXPECT_LE(res->distance, ip.answer_radius());
    EXPECT_THROW(query_tree(tree, Point{1.0}, ip, ds), InvalidInput);
}

TEST(QueryForest, HardGuaranteeAndWorkBound) {
    const auto& inst = small_instance();
    const auto ip = small_params(13, 8);
    const Forest forest = build_forest(std::make_shared<const Dataset>(inst.dataset), ip);
    std::mt19937_64 rng(14);
    std::size_t answered = 0;
    for (std::size_t k = 0; k < inst.queries.size(); ++k) {
        QueryTrace trace;
        const auto res = query_forest(forest, inst.queries[k], &trace);
        EXPECT_LE(trace.nodes_visited, static_cast<std::size_t>(ip.n_trees) * (ip.max_depth + 1));
        if (res) {
            ++answered;
            const double d = lp_distance(inst.queries[k], inst.dataset[res->id], 4.0);
            EXPECT_EQ(d, res->distance);
            EXPECT_LE(d, ip.answer_radius());
        }
    }
    EXPECT_GT(answered, inst.queries.size() / 2);

    // Random far-away probes never produce an answer beyond c r.
    for (int k = 0; k < 50; ++k) {
        const auto q = gaussian(rng, inst.dataset.dim(), 3e4);
        if (const auto res = query_forest(forest, q)) {
            EXPECT_LE(res->distance, ip.answer_radius());
        }
    }
}

TEST(QueryForest, SingleTreeMatchesQueryTree) {
    const auto& inst = small_instance();
    const auto ip = small_params(15, 1);
    const Forest forest = build_forest(std::make_shared<const Dataset>(inst.dataset), ip);
    for (std::size_t k = 0; k < inst.queries.size(); ++k) {
        EXPECT_EQ(query_forest(forest, inst.queries[k]), query_tree(forest.trees[0], inst.queries[k], ip, inst.dataset));
    }
}

TEST(LemmaAlphaCheck, VacuousWhenHypothesesFail) {
    // A dense cluster violates the no-dense-ball hypothesis.
    const Dataset ds(std::vector<Point>(16, Point{1.0, 1.0}), 4.0);
    std::vector<Point> pts(16, Point{1.0, 1.0});
    pts[3] = {1.5, 1.0};
    const Dataset ds2(pts, 4.0);
    const auto ip = derive_params(4.0, 0.5, ds2.size());
    Rng rng(1);
    const auto ids = ds2.all_ids();
    const auto lc = lemma_alpha_check(ds2, ids, Point{1.2, 1.0}, AvgEmbedding(4.0, Point{0.0, 0.0}), ip, 10, rng);
    EXPECT_FALSE(lc.hypotheses_met);
    EXPECT_FALSE(lc.no_dense_center);
    EXPECT_TRUE(lc.holds);
    EXPECT_EQ(lc.alpha, 1.0);
    (void)ds;
}

TEST(LemmaAlphaCheck, SpreadSetHasSmallAlpha) {
    const auto& inst = small_instance();
    const auto ip = small_params();
    const auto ids = inst.dataset.all_ids();
    Rng rng(2);
    const auto z = center_scan(inst.dataset, ids, rng).best_z;
    const AvgEmbedding emb(4.0, z);
    const auto q = inst.queries[0];
    const auto lc = lemma_alpha_check(inst.dataset, ids, q, emb, ip, 100, rng);
    EXPECT_TRUE(lc.no_dense_center);
    EXPECT_TRUE(lc.diameter_ok);
    EXPECT_LT(lc.alpha, 0.05);
    EXPECT_TRUE(lc.holds);
    EXPECT_NEAR(lc.bound, 1.0 - 0.875 * ip.lambda * ip.lambda / (4.0 * 324.0 * ip.c_approx * ip.c_approx), 1e-15);
}

TEST(LemmaAlphaCheck, RequiresNearQuery) {
    const auto& inst = small_instance();
    const auto ip = small_params();
    const auto ids = inst.dataset.all_ids();
    Rng rng(3);
    const AvgEmbedding emb(4.0, Point(inst.dataset.dim(), 0.0));
    EXPECT_THROW(lemma_alpha_check(inst.dataset, ids, Point(inst.dataset.dim(), 0.0), emb, ip, 10, rng), InvalidInput);
}
