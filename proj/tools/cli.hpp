#pragma once

// Experiment CLI. Exit codes: 0 success, 1 validation error, 2 internal
// assertion failure (including a broken c*r guarantee during eval).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avgann/avgann.hpp"

namespace avgann::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitInternal = 2;

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    avgann::detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

inline void require(bool ok, const std::string& flag, const std::string& constraint) {
    if (!ok) {
        throw InvalidParameter(flag + " " + constraint);
    }
}

struct GenArgs {
    std::size_t n = 1024;
    std::size_t d = 16;
    double p = 4.0;
    double eps = 0.5;
    std::uint64_t seed = 0;
    std::size_t n_queries = 100;
    std::string out_data, out_queries, out_truth;
};

struct BuildArgs {
    std::string data, out_index;
    double eps = 0.5;
    std::uint64_t seed = 0;
    double r = 1.0;
    unsigned threads = 0;
};

struct QueryArgs {
    std::string index, queries, out;
};

struct EvalArgs {
    std::string index, data, queries, truth, out;
};

struct VerifyArgs {
    std::string data, center = "scan", out;
    std::size_t pairs = 10000;
    std::uint64_t seed = 0;
};

struct ScanArgs {
    std::string data, out;
    std::uint64_t seed = 0;
};

struct CurveArgs {
    double width = 4.0;
    double smin = 0.25;
    double smax = 16.0;
    std::size_t steps = 20;
    std::size_t trials = 100000;
    std::size_t dim = 8;
    std::uint64_t seed = 0;
    std::string out;
};

inline int run_gen(const GenArgs& a, std::ostream& out) {
    require(a.n >= 2, "--n", "must be >= 2");
    require(a.d >= 2, "--d", "must be >= 2");
    require(a.p >= 2.0, "--p", "must be >= 2");
    require(a.eps > 0.0 && a.eps <= 1.0, "--eps", "must lie in (0, 1]");
    const auto inst = plant_instance(a.n, a.d, a.p, a.eps, a.seed, a.n_queries);
    write_dataset(inst.dataset, a.out_data);
    write_dataset(inst.queries, a.out_queries);
    write_truth(inst.truth, a.out_truth);
    out << "generated " << inst.dataset.size() << " points, " << inst.queries.size() << " queries (d=" << a.d
        << ", p=" << a.p << ", c=" << inst.bounds.c << ", beta=" << inst.bounds.beta << ")\n";
    return kExitOk;
}

inline int run_build(const BuildArgs& a, std::ostream& out, std::ostream& err) {
    require(a.eps > 0.0 && a.eps <= 1.0, "--eps", "must lie in (0, 1]");
    require(a.r > 0.0 && std::isfinite(a.r), "--r", "must be finite and > 0");
    Dataset ds = read_dataset(a.data);
    require(ds.size() >= 2, "--data", "must hold at least 2 points");
    if (a.r != 1.0) {
        ds = ds.scaled(1.0 / a.r);
    }
    std::vector<std::string> warnings;
    const IndexParams params = derive_params(ds.p_exp(), a.eps, ds.size(), a.seed, &warnings);
    const Forest forest = build_forest(std::make_shared<const Dataset>(std::move(ds)), params, a.threads);
    for (const auto& w : warnings) {
        err << "warning: " << w << '\n';
    }
    for (const auto& w : forest.stats.warnings) {
        err << "warning: " << w << '\n';
    }
    save_index(forest, a.out_index, a.r);
    out << "built " << forest.trees.size() << " trees over " << forest.dataset->size() << " points in "
        << forest.stats.build_ms << " ms (lambda=" << params.lambda << ", w=" << params.w
        << ", c=" << params.c_approx << ", W=" << params.lsh_width << ", p1=" << params.p1 << ", p2=" << params.p2
        << ")\n";
    return kExitOk;
}

inline Dataset load_queries(const std::string& path, const StoredIndex& idx) {
    Dataset q = read_dataset(path);
    const Dataset& ds = *idx.forest.dataset;
    if (q.dim() != ds.dim()) {
        throw InvalidInput("--queries: dimension mismatch (queries d=" + std::to_string(q.dim()) + ", index d=" +
                           std::to_string(ds.dim()) + ")");
    }
    if (q.p_exp() != ds.p_exp()) {
        throw InvalidInput("--queries: exponent p differs from the index");
    }
    return idx.input_scale == 1.0 ? q : q.scaled(1.0 / idx.input_scale);
}

inline int run_query(const QueryArgs& a, std::ostream& out) {
    const StoredIndex idx = load_index(a.index);
    const Dataset queries = load_queries(a.queries, idx);
    std::string csv = "query_id,found,nn_id,distance\r\n";
    std::size_t found = 0;
    for (std::size_t k = 0; k < queries.size(); ++k) {
        const auto res = query_forest(idx.forest, queries[k]);
        csv += std::to_string(k) + ",";
        if (res) {
            ++found;
            csv += "1," + std::to_string(res->id) + "," +
                   avgann::detail::format_double(res->distance * idx.input_scale) + "\r\n";
        } else {
            csv += "0,,\r\n";
        }
    }
    write_text(a.out, csv);
    out << "answered " << found << " of " << queries.size() << " queries\n";
    return kExitOk;
}

inline int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const StoredIndex idx = load_index(a.index);
    const Dataset& indexed = *idx.forest.dataset;
    Dataset data = read_dataset(a.data);
    if (data.dim() != indexed.dim()) {
        throw InvalidInput("--data: dimension mismatch (data d=" + std::to_string(data.dim()) + ", index d=" +
                           std::to_string(indexed.dim()) + ")");
    }
    if (idx.input_scale != 1.0) {
        data = data.scaled(1.0 / idx.input_scale);
    }
    if (!(data == indexed)) {
        throw InvalidInput("--data: dataset differs from the one stored in the index");
    }
    const Dataset queries = load_queries(a.queries, idx);
    const auto truth = read_truth(a.truth, queries.size(), data.size());
    if (truth.size() != queries.size()) {
        throw InvalidInput("--truth: " + std::to_string(truth.size()) + " rows for " +
                           std::to_string(queries.size()) + " queries");
    }
    for (const auto& t : truth) {
        const double d = lp_distance(queries[t.query_id], data[t.nn_id], data.p_exp()) * idx.input_scale;
        if (std::abs(d - t.distance) > 1e-9 * std::max(1.0, t.distance)) {
            throw InvalidInput("--truth: row for query " + std::to_string(t.query_id) +
                               " does not match the recomputed distance");
        }
    }
    const EvalReport rep = evaluate(idx.forest, queries);
    const auto json = to_json(rep);
    write_text(a.out, json.dump(2) + "\n");
    out << to_text(json);
    if (!rep.all_within_c || !rep.oracle_consistent) {
        err << "error: returned answer violates the c*r guarantee or the brute-force oracle\n";
        return kExitInternal;
    }
    return kExitOk;
}

inline int run_verify(const VerifyArgs& a, std::ostream& out) {
    require(a.pairs >= 1, "--pairs", "must be >= 1");
    const Dataset ds = read_dataset(a.data);
    require(ds.size() >= 2, "--data", "must hold at least 2 points");
    Rng rng(a.seed);
    const auto ids = ds.all_ids();
    Point z;
    if (a.center == "scan") {
        z = center_scan(ds, ids, rng).best_z;
    } else if (a.center == "zero") {
        z.assign(ds.dim(), 0.0);
    } else if (a.center == "mean") {
        z = avgann::detail::coordinate_mean(ds, ids);
    } else {
        z = avgann::detail::coordinate_median(ds, ids);
    }
    const AvgEmbedding emb(ds.p_exp(), std::move(z));
    const auto rep = verify_average_embedding(ds, ids, emb, a.pairs, rng);
    const auto json = to_json(rep);
    out << "center  " << a.center << "\nD       " << emb.lip_const() << '\n' << to_text(json);
    if (!a.out.empty()) {
        write_text(a.out, json.dump(2) + "\n");
    }
    return kExitOk;
}

inline int run_scan(const ScanArgs& a, std::ostream& out) {
    const Dataset ds = read_dataset(a.data);
    require(ds.size() >= 2, "--data", "must hold at least 2 points");
    Rng rng(a.seed);
    const auto res = center_scan(ds, rng);
    std::string csv = "candidate,label,C\r\n";
    for (std::size_t i = 0; i < res.candidates.size(); ++i) {
        csv += std::to_string(i) + "," + res.candidates[i].label + "," +
               avgann::detail::format_double(res.candidates[i].c_emp) + "\r\n";
    }
    write_text(a.out, csv);
    out << "best center: candidate " << res.best_index << " (" << res.best_label << "), C = " << res.best_C << '\n';
    return kExitOk;
}

inline int run_curve(const CurveArgs& a, std::ostream& out) {
    require(a.width > 0.0, "--width", "must be > 0");
    require(a.smin >= 0.0, "--smin", "must be >= 0");
    require(a.smax >= a.smin, "--smax", "must be >= --smin");
    require(a.steps >= 1, "--steps", "must be >= 1");
    require(a.trials >= 1, "--trials", "must be >= 1");
    require(a.dim >= 1, "--dim", "must be >= 1");
    Rng rng(a.seed);
    std::string csv = "W,s,p_analytic,p_montecarlo,n_trials\r\n";
    for (std::size_t i = 0; i < a.steps; ++i) {
        const double s = a.steps == 1 ? a.smin
                                      : a.smin + (a.smax - a.smin) * static_cast<double>(i) /
                                                     static_cast<double>(a.steps - 1);
        const double pa = collision_probability(a.width, s);
        const double pm = empirical_collision_rate(a.width, s, a.trials, a.dim, rng);
        csv += avgann::detail::format_double(a.width) + "," + avgann::detail::format_double(s) + "," +
               avgann::detail::format_double(pa) + "," + avgann::detail::format_double(pm) + "," +
               std::to_string(a.trials) + "\r\n";
    }
    write_text(a.out, csv);
    out << "wrote " << a.steps << " rows to " << a.out << '\n';
    return kExitOk;
}

} // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Average-embedding ANN for l_p: data generation, index build, query and verification"};
    app.require_subcommand(1);

    detail::GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a planted beta-bounded instance");
    gen_cmd->add_option("--n", gen.n, "Number of dataset points")->capture_default_str();
    gen_cmd->add_option("--d", gen.d, "Dimension")->capture_default_str();
    gen_cmd->add_option("--p", gen.p, "l_p exponent (>= 2)")->capture_default_str();
    gen_cmd->add_option("--eps", gen.eps, "Accuracy parameter in (0, 1]")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    gen_cmd->add_option("--queries", gen.n_queries, "Number of queries")->capture_default_str();
    gen_cmd->add_option("--out-data", gen.out_data, "Dataset output file")->required();
    gen_cmd->add_option("--out-queries", gen.out_queries, "Query output file")->required();
    gen_cmd->add_option("--out-truth", gen.out_truth, "Truth CSV output file")->required();

    detail::BuildArgs build;
    auto* build_cmd = app.add_subcommand("build", "Build and persist a forest index");
    build_cmd->add_option("--data", build.data, "Dataset file")->required();
    build_cmd->add_option("--eps", build.eps, "Accuracy parameter in (0, 1]")->capture_default_str();
    build_cmd->add_option("--seed", build.seed, "Random seed")->capture_default_str();
    build_cmd->add_option("--r", build.r, "Near radius of the input data (rescaled to 1)")->capture_default_str();
    build_cmd->add_option("--threads", build.threads, "Build threads (0 = all cores)")->capture_default_str();
    build_cmd->add_option("--out-index", build.out_index, "Index output file")->required();

    detail::QueryArgs query;
    auto* query_cmd = app.add_subcommand("query", "Answer queries with a persisted index");
    query_cmd->add_option("--index", query.index, "Index file")->required();
    query_cmd->add_option("--queries", query.queries, "Query dataset file")->required();
    query_cmd->add_option("--out", query.out, "CSV report")->required();

    detail::EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate an index against brute force");
    eval_cmd->add_option("--index", eval.index, "Index file")->required();
    eval_cmd->add_option("--data", eval.data, "Dataset file the index was built from")->required();
    eval_cmd->add_option("--queries", eval.queries, "Query dataset file")->required();
    eval_cmd->add_option("--truth", eval.truth, "Truth CSV")->required();
    eval_cmd->add_option("--out", eval.out, "JSON report")->required();

    detail::VerifyArgs verify;
    auto* verify_cmd = app.add_subcommand("verify-embed", "Check both average-embedding conditions on a dataset");
    verify_cmd->add_option("--data", verify.data, "Dataset file")->required();
    verify_cmd->add_option("--pairs", verify.pairs, "Random pairs for the Lipschitz probe")->capture_default_str();
    verify_cmd->add_option("--center", verify.center, "Embedding center")
        ->check(CLI::IsMember({"scan", "zero", "mean", "median"}))
        ->capture_default_str();
    verify_cmd->add_option("--seed", verify.seed, "Random seed")->capture_default_str();
    verify_cmd->add_option("--out", verify.out, "Optional JSON report");

    detail::ScanArgs scan;
    auto* scan_cmd = app.add_subcommand("conjecture-scan", "Score candidate centers z by C_emp");
    scan_cmd->add_option("--data", scan.data, "Dataset file")->required();
    scan_cmd->add_option("--out", scan.out, "CSV of candidate scores")->required();
    scan_cmd->add_option("--seed", scan.seed, "Random seed")->capture_default_str();

    detail::CurveArgs curve;
    auto* curve_cmd = app.add_subcommand("lsh-curve", "Analytic vs Monte-Carlo LSH collision curve");
    curve_cmd->add_option("--width", curve.width, "Bucket width W")->capture_default_str();
    curve_cmd->add_option("--smin", curve.smin, "Smallest distance")->capture_default_str();
    curve_cmd->add_option("--smax", curve.smax, "Largest distance")->capture_default_str();
    curve_cmd->add_option("--steps", curve.steps, "Number of distances")->capture_default_str();
    curve_cmd->add_option("--trials", curve.trials, "Monte-Carlo trials per distance")->capture_default_str();
    curve_cmd->add_option("--dim", curve.dim, "Ambient dimension of the simulated points")->capture_default_str();
    curve_cmd->add_option("--seed", curve.seed, "Random seed")->capture_default_str();
    curve_cmd->add_option("--out", curve.out, "CSV output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }

    try {
        if (*gen_cmd) {
            return detail::run_gen(gen, out);
        }
        if (*build_cmd) {
            return detail::run_build(build, out, err);
        }
        if (*query_cmd) {
            return detail::run_query(query, out);
        }
        if (*eval_cmd) {
            return detail::run_eval(eval, out, err);
        }
        if (*verify_cmd) {
            return detail::run_verify(verify, out);
        }
        if (*scan_cmd) {
            return detail::run_scan(scan, out);
        }
        if (*curve_cmd) {
            return detail::run_curve(curve, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitInternal;
}

} // namespace avgann::cli
