#pragma once

// EvalReport / EmbedVerifyReport serialization: text, flat CSV and flat JSON.

#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "avgann/eval.hpp"
#include "avgann/io.hpp"
#include "avgann/mazur.hpp"

namespace avgann {

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    return {
        {"n_queries", r.n_queries},
        {"success_rate", r.success_rate},
        {"all_within_c", r.all_within_c},
        {"oracle_consistent", r.oracle_consistent},
        {"ratio_mean", r.ratio_mean},
        {"ratio_max", r.ratio_max},
        {"zero_distance_queries", r.zero_distance_queries},
        {"build_ms", r.build_ms},
        {"mean_query_us", r.mean_query_us},
        {"median_query_us", r.median_query_us},
        {"partition_nodes", r.partition_nodes},
        {"c_emp_min", r.c_emp_min},
        {"c_emp_mean", r.c_emp_mean},
        {"c_emp_max", r.c_emp_max},
        {"c_emp_below_one", r.c_emp_below_one},
        {"c_approx", r.c_approx},
        {"n_trees", r.n_trees},
    };
}

inline nlohmann::ordered_json to_json(const EmbedVerifyReport& r) {
    return {
        {"max_lip_ratio", r.max_lip_ratio},
        {"noncontraction_ratio_C", r.noncontraction_ratio_C},
        {"pairs_probed", r.pairs_probed},
        {"passed_lipschitz", r.passed_lipschitz},
        {"passed_noncontraction", r.passed_noncontraction},
    };
}

/// One header line plus one record line, columns in JSON field order.
inline std::string to_csv(const nlohmann::ordered_json& flat) {
    std::string header;
    std::string row;
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        if (!header.empty()) {
            header += ',';
            row += ',';
        }
        header += it.key();
        const auto& v = it.value();
        if (v.is_boolean()) {
            row += v.get<bool>() ? "true" : "false";
        } else if (v.is_number_float()) {
            row += detail::format_double(v.get<double>());
        } else {
            row += v.dump();
        }
    }
    return header + "\r\n" + row + "\r\n";
}

inline std::string to_text(const nlohmann::ordered_json& flat) {
    std::ostringstream os;
    std::size_t width = 0;
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        width = std::max(width, it.key().size());
    }
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        os << std::left << std::setw(static_cast<int>(width)) << it.key() << "  " << it.value().dump() << '\n';
    }
    return os.str();
}

} // namespace avgann
