#pragma once

// Versioned index blob. Layout is documented in docs/index_format.md.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "avgann/detail/binary.hpp"
#include "avgann/errors.hpp"
#include "avgann/forest.hpp"
#include "avgann/io.hpp"

namespace avgann {

inline constexpr std::string_view kIndexMagic = "AEIX";
inline constexpr std::uint8_t kIndexVersion = 1;

/// A forest plus the factor its dataset was divided by to normalize r to 1.
struct StoredIndex {
    Forest forest;
    double input_scale = 1.0;
};

namespace detail {

enum class FieldType : std::uint8_t { F64 = 0, U64 = 1 };
enum class NodeKind : std::uint8_t { Ball = 0, Partition = 1, Leaf = 2 };

class SectionWriter {
public:
    SectionWriter(ByteWriter& w, std::string_view tag) : w_(w) {
        w_.bytes(tag);
        len_pos_ = w_.size();
        w_.u64(0);
    }
    SectionWriter(const SectionWriter&) = delete;
    SectionWriter& operator=(const SectionWriter&) = delete;
    ~SectionWriter() { w_.patch_u64(len_pos_, w_.size() - len_pos_ - 8); }

private:
    ByteWriter& w_;
    std::size_t len_pos_;
};

inline void write_params(ByteWriter& w, const IndexParams& ip, double input_scale) {
    SectionWriter s(w, "PRMS");
    const std::vector<std::pair<std::string_view, double>> reals = {
        {"p_exp", ip.p_exp},   {"eps", ip.eps},       {"D", ip.D},
        {"lambda", ip.lambda}, {"w", ip.w},           {"c_approx", ip.c_approx},
        {"beta", ip.beta},     {"r", ip.r},           {"dense_frac", ip.dense_frac},
        {"lsh_width", ip.lsh_width}, {"p1", ip.p1},   {"p2", ip.p2},
        {"input_scale", input_scale}};
    const std::vector<std::pair<std::string_view, std::uint64_t>> ints = {
        {"leaf_size", ip.leaf_size}, {"max_depth", ip.max_depth}, {"n_trees", ip.n_trees}, {"seed", ip.seed}};
    w.u32(static_cast<std::uint32_t>(reals.size() + ints.size()));
    for (const auto& [name, v] : reals) {
        w.u8(static_cast<std::uint8_t>(name.size()));
        w.bytes(name);
        w.u8(static_cast<std::uint8_t>(FieldType::F64));
        w.f64(v);
    }
    for (const auto& [name, v] : ints) {
        w.u8(static_cast<std::uint8_t>(name.size()));
        w.bytes(name);
        w.u8(static_cast<std::uint8_t>(FieldType::U64));
        w.u64(v);
    }
}

inline void write_tree(ByteWriter& w, const Tree& tree) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& node : tree.nodes) {
        if (const auto* b = std::get_if<BallNode>(&node)) {
            w.u8(static_cast<std::uint8_t>(NodeKind::Ball));
            w.u32(b->center);
            w.u32(b->representative);
            w.u32(b->child);
        } else if (const auto* p = std::get_if<PartitionNode>(&node)) {
            w.u8(static_cast<std::uint8_t>(NodeKind::Partition));
            w.f64(p->embedding.p_exp());
            w.u32(static_cast<std::uint32_t>(p->embedding.dim()));
            for (double v : p->embedding.center()) {
                w.f64(v);
            }
            for (double v : p->hash.direction) {
                w.f64(v);
            }
            w.f64(p->hash.offset);
            w.f64(p->hash.width);
            w.f64(p->c_emp);
            w.u32(static_cast<std::uint32_t>(p->children.size()));
            for (const auto& [k, c] : p->children) {
                w.i64(k);
                w.u32(c);
            }
        } else {
            const auto& l = std::get<LeafNode>(node);
            w.u8(static_cast<std::uint8_t>(NodeKind::Leaf));
            w.u32(static_cast<std::uint32_t>(l.points.size()));
            for (PointId id : l.points) {
                w.u32(id);
            }
        }
    }
}

inline Tree read_tree(ByteReader& r, std::size_t n_points, std::size_t dim) {
    Tree tree;
    const std::uint32_t count = r.u32();
    auto check_point = [&](std::uint32_t id) {
        if (id >= n_points) {
            throw ParseError(r.what() + ": point id out of range");
        }
        return id;
    };
    auto check_node = [&](std::uint32_t id) {
        if (id != kNoNode && id >= count) {
            throw ParseError(r.what() + ": node id out of range");
        }
        return id;
    };
    tree.nodes.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto kind = static_cast<NodeKind>(r.u8());
        switch (kind) {
        case NodeKind::Ball: {
            BallNode b;
            b.center = check_point(r.u32());
            b.representative = check_point(r.u32());
            b.child = check_node(r.u32());
            tree.nodes.emplace_back(b);
            break;
        }
        case NodeKind::Partition: {
            const double p = r.f64();
            const std::uint32_t d = r.u32();
            if (d != dim) {
                throw ParseError(r.what() + ": partition node dimension differs from the dataset");
            }
            Point z(d);
            for (double& v : z) {
                v = r.f64();
            }
            LshFunction h;
            h.direction.resize(d);
            for (double& v : h.direction) {
                v = r.f64();
            }
            h.offset = r.f64();
            h.width = r.f64();
            PartitionNode pn{AvgEmbedding(p, std::move(z)), std::move(h), r.f64(), {}};
            const std::uint32_t nc = r.u32();
            pn.children.reserve(nc);
            for (std::uint32_t k = 0; k < nc; ++k) {
                const BucketId b = r.i64();
                if (!pn.children.empty() && b <= pn.children.back().first) {
                    throw ParseError(r.what() + ": partition buckets not strictly increasing");
                }
                pn.children.emplace_back(b, check_node(r.u32()));
            }
            tree.nodes.emplace_back(std::move(pn));
            break;
        }
        case NodeKind::Leaf: {
            LeafNode l;
            const std::uint32_t m = r.u32();
            r.need(static_cast<std::size_t>(m) * 4);
            l.points.reserve(m);
            for (std::uint32_t k = 0; k < m; ++k) {
                l.points.push_back(check_point(r.u32()));
            }
            tree.nodes.emplace_back(std::move(l));
            break;
        }
        default:
            throw ParseError(r.what() + ": unknown node kind " + std::to_string(static_cast<int>(kind)));
        }
    }
    return tree;
}

} // namespace detail

inline std::vector<char> encode_index(const Forest& forest, double input_scale = 1.0) {
    detail::ByteWriter w;
    w.bytes(kIndexMagic);
    w.u8(kIndexVersion);
    detail::write_params(w, forest.params, input_scale);
    {
        detail::SectionWriter s(w, "DATA");
        const auto bytes = encode_dataset(*forest.dataset);
        w.bytes(std::string_view(bytes.data(), bytes.size()));
    }
    {
        detail::SectionWriter s(w, "TREE");
        w.u32(static_cast<std::uint32_t>(forest.trees.size()));
        for (const auto& t : forest.trees) {
            detail::write_tree(w, t);
        }
    }
    {
        detail::SectionWriter s(w, "STAT");
        w.f64(forest.stats.build_ms);
        w.u32(static_cast<std::uint32_t>(forest.stats.warnings.size()));
        for (const auto& msg : forest.stats.warnings) {
            w.str(msg);
        }
    }
    return std::move(w.buffer());
}

inline StoredIndex decode_index(const std::vector<char>& bytes, const std::string& name = "index") {
    if (bytes.size() < 4 || std::string_view(bytes.data(), 4) != kIndexMagic) {
        throw BadMagic(name + ": bad magic, expected \"AEIX\"");
    }
    detail::ByteReader r(bytes.data(), bytes.size(), name);
    r.bytes(4);
    const auto version = r.u8();
    if (version != kIndexVersion) {
        throw VersionMismatch(name + ": unsupported index version " + std::to_string(version));
    }

    std::map<std::string, double> reals;
    std::map<std::string, std::uint64_t> ints;
    std::shared_ptr<Dataset> dataset;
    std::vector<char> tree_section;
    StoredIndex out;
    bool have_params = false;
    bool have_trees = false;
    while (r.remaining() > 0) {
        const std::string tag(r.bytes(4));
        const std::uint64_t len = r.u64();
        r.need(len);
        const std::string_view body = r.bytes(len);
        detail::ByteReader s(body.data(), body.size(), name + "[" + tag + "]");
        if (tag == "PRMS") {
            const std::uint32_t count = s.u32();
            for (std::uint32_t i = 0; i < count; ++i) {
                const std::string key(s.bytes(s.u8()));
                const auto type = static_cast<detail::FieldType>(s.u8());
                if (type == detail::FieldType::F64) {
                    reals[key] = s.f64();
                } else if (type == detail::FieldType::U64) {
                    ints[key] = s.u64();
                } else {
                    throw ParseError(name + ": unknown parameter type for '" + key + "'");
                }
            }
            have_params = true;
        } else if (tag == "DATA") {
            dataset = std::make_shared<Dataset>(decode_dataset(std::vector<char>(body.begin(), body.end()), name));
        } else if (tag == "TREE") {
            tree_section.assign(body.begin(), body.end());
            have_trees = true;
        } else if (tag == "STAT") {
            out.forest.stats.build_ms = s.f64();
            const std::uint32_t n = s.u32();
            for (std::uint32_t i = 0; i < n; ++i) {
                out.forest.stats.warnings.push_back(s.str());
            }
        }
        // Unknown sections are skipped.
    }
    if (!have_params || !dataset || !have_trees) {
        throw Truncated(name + ": missing PRMS, DATA or TREE section");
    }

    auto real = [&](const char* key) {
        auto it = reals.find(key);
        if (it == reals.end()) {
            throw ParseError(name + ": missing parameter '" + key + "'");
        }
        return it->second;
    };
    auto integer = [&](const char* key) {
        auto it = ints.find(key);
        if (it == ints.end()) {
            throw ParseError(name + ": missing parameter '" + key + "'");
        }
        return it->second;
    };
    IndexParams& ip = out.forest.params;
    ip.p_exp = real("p_exp");
    ip.eps = real("eps");
    ip.D = real("D");
    ip.lambda = real("lambda");
    ip.w = real("w");
    ip.c_approx = real("c_approx");
    ip.beta = real("beta");
    ip.r = real("r");
    ip.dense_frac = real("dense_frac");
    ip.lsh_width = real("lsh_width");
    ip.p1 = real("p1");
    ip.p2 = real("p2");
    ip.leaf_size = static_cast<std::uint32_t>(integer("leaf_size"));
    ip.max_depth = static_cast<std::uint32_t>(integer("max_depth"));
    ip.n_trees = static_cast<std::uint32_t>(integer("n_trees"));
    ip.seed = integer("seed");
    out.input_scale = reals.contains("input_scale") ? reals["input_scale"] : 1.0;
    if (dataset->p_exp() != ip.p_exp) {
        throw ParseError(name + ": dataset exponent differs from the index exponent");
    }
    try {
        ip.validate();
    } catch (const InvalidParameter& e) {
        throw ParseError(name + ": " + e.what());
    }

    detail::ByteReader tr(tree_section.data(), tree_section.size(), name + "[TREE]");
    const std::uint32_t n_trees = tr.u32();
    if (n_trees != ip.n_trees) {
        throw ParseError(name + ": tree count does not match n_trees");
    }
    for (std::uint32_t t = 0; t < n_trees; ++t) {
        out.forest.trees.push_back(detail::read_tree(tr, dataset->size(), dataset->dim()));
    }
    out.forest.dataset = std::move(dataset);
    return out;
}

inline void save_index(const Forest& forest, const std::string& path, double input_scale = 1.0) {
    detail::write_file(path, encode_index(forest, input_scale));
}

inline StoredIndex load_index(const std::string& path) { return decode_index(detail::read_file(path), path); }

} // namespace avgann
