#include <cstring>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "avgann/eval.hpp"
#include "avgann/index_io.hpp"
#include "avgann/io.hpp"

using namespace avgann;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("avgann_test_io_" + name)).string();
}

Dataset sample_dataset() { return Dataset({{1.5, -2.0, 3.25}, {0.0, 1e-300, -7.0}, {4.0, 5.0, 6.0}}, 3.0); }

template <typename E>
std::string error_of(const std::vector<char>& bytes) {
    try {
        decode_dataset(bytes, "blob");
    } catch (const E& e) {
        return e.what();
    }
    return "<no error>";
}

} // namespace

TEST(DatasetFormat, RoundTripBitExact) {
    const Dataset ds = sample_dataset();
    const auto bytes = encode_dataset(ds);
    EXPECT_EQ(bytes.size(), kDatasetHeaderBytes + 3 * 3 * 8);
    EXPECT_EQ(decode_dataset(bytes), ds);

    const auto path = temp_path("ds.bin");
    write_dataset(ds, path);
    EXPECT_EQ(read_dataset(path), ds);
    std::filesystem::remove(path);
}

TEST(DatasetFormat, EmptyDatasetRoundTrips) {
    const Dataset ds(4, 2.0);
    EXPECT_EQ(decode_dataset(encode_dataset(ds)), ds);
}

TEST(DatasetFormat, BadMagic) {
    auto bytes = encode_dataset(sample_dataset());
    bytes[0] = 'X';
    EXPECT_NE(error_of<BadMagic>(bytes).find("magic"), std::string::npos);
    EXPECT_THROW(decode_dataset(std::vector<char>{'A', 'E'}), BadMagic);
}

TEST(DatasetFormat, VersionMismatch) {
    auto bytes = encode_dataset(sample_dataset());
    bytes[4] = 7;
    EXPECT_NE(error_of<VersionMismatch>(bytes).find("version 7"), std::string::npos);
}

TEST(DatasetFormat, TruncatedNamesByteCounts) {
    auto bytes = encode_dataset(sample_dataset());
    bytes.resize(bytes.size() - 5);
    const auto msg = error_of<Truncated>(bytes);
    EXPECT_NE(msg.find("expected 72 bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 67"), std::string::npos) << msg;

    auto header_only = encode_dataset(sample_dataset());
    header_only.resize(10);
    EXPECT_THROW(decode_dataset(header_only), Truncated);
}

TEST(DatasetFormat, TrailingBytes) {
    auto bytes = encode_dataset(sample_dataset());
    bytes.push_back(0);
    EXPECT_THROW(decode_dataset(bytes), ParseError);
}

TEST(DatasetFormat, NonFiniteValue) {
    auto bytes = encode_dataset(sample_dataset());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    // point 1, coordinate 2
    std::memcpy(bytes.data() + kDatasetHeaderBytes + (1 * 3 + 2) * 8, &nan, 8);
    const auto msg = error_of<NonFiniteValue>(bytes);
    EXPECT_NE(msg.find("point 1, coordinate 2"), std::string::npos) << msg;
}

TEST(DatasetFormat, BadHeaderFields) {
    const Dataset ds = sample_dataset();
    auto zero_dim = encode_dataset(ds);
    std::memset(zero_dim.data() + 9, 0, 4);
    EXPECT_THROW(decode_dataset(zero_dim), ParseError);

    auto low_p = encode_dataset(ds);
    const double one = 1.0;
    std::memcpy(low_p.data() + 13, &one, 8);
    EXPECT_THROW(decode_dataset(low_p), ParseError);
}

TEST(DatasetFormat, MissingFile) {
    EXPECT_THROW(read_dataset(temp_path("does_not_exist.bin")), Error);
}

TEST(TruthCsv, RoundTrip) {
    const std::vector<TruthEntry> truth{{0, 5, 0.25}, {1, 2, 1.0 / 3.0}, {2, 0, 0.0}};
    const auto text = encode_truth(truth);
    EXPECT_EQ(text.substr(0, 25), "query_id,nn_id,distance\r\n");
    const auto back = decode_truth(text);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].query_id, truth[i].query_id);
        EXPECT_EQ(back[i].nn_id, truth[i].nn_id);
        EXPECT_EQ(back[i].distance, truth[i].distance);
    }
}

TEST(TruthCsv, Strict) {
    EXPECT_THROW(decode_truth(""), ParseError);
    EXPECT_THROW(decode_truth("id,nn,d\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n0,1\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n0,1,abc\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n0,1,0.5x\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n0,-1,0.5\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n0,1,-0.5\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n0,1,nan\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n\n0,1,0.5\n"), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n3,1,0.5\n", 2, 10), ParseError);
    EXPECT_THROW(decode_truth("query_id,nn_id,distance\n0,10,0.5\n", 2, 10), ParseError);
    EXPECT_EQ(decode_truth("query_id,nn_id,distance\n0,1,0.5").size(), 1u);
}

TEST(IndexFormat, RoundTripAnswersAreBitIdentical) {
    const auto inst = plant_instance(300, 6, 4.0, 0.5, 17, 10);
    auto ip = derive_params(4.0, 0.5, inst.dataset.size(), 3);
    ip.n_trees = 5;
    const Forest forest = build_forest(std::make_shared<const Dataset>(inst.dataset), ip);
    const auto path = temp_path("index.bin");
    save_index(forest, path, 2.5);
    const StoredIndex loaded = load_index(path);
    std::filesystem::remove(path);

    EXPECT_EQ(loaded.input_scale, 2.5);
    EXPECT_EQ(loaded.forest.params, forest.params);
    EXPECT_EQ(*loaded.forest.dataset, *forest.dataset);
    EXPECT_TRUE(loaded.forest.same_structure(forest));
    EXPECT_EQ(loaded.forest.stats.warnings, forest.stats.warnings);

    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> pick(0, inst.dataset.size() - 1);
    std::normal_distribution<double> g(0.0, 0.3);
    for (int k = 0; k < 100; ++k) {
        const auto base = inst.dataset[pick(rng)];
        Point q(base.begin(), base.end());
        for (auto& v : q) {
            v += g(rng);
        }
        const auto a = query_forest(forest, q);
        const auto b = query_forest(loaded.forest, q);
        ASSERT_EQ(a.has_value(), b.has_value());
        if (a) {
            EXPECT_EQ(a->id, b->id);
            EXPECT_EQ(std::memcmp(&a->distance, &b->distance, sizeof(double)), 0);
        }
    }
}

TEST(IndexFormat, RejectsCorruption) {
    const auto inst = plant_instance(40, 3, 4.0, 0.5, 2, 1);
    auto ip = derive_params(4.0, 0.5, inst.dataset.size(), 3);
    ip.n_trees = 1;
    const Forest forest = build_forest(std::make_shared<const Dataset>(inst.dataset), ip);
    auto bytes = encode_index(forest);
    EXPECT_NO_THROW(decode_index(bytes));

    auto bad_magic = bytes;
    bad_magic[1] = 'Z';
    EXPECT_THROW(decode_index(bad_magic), BadMagic);

    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(decode_index(bad_version), VersionMismatch);

    for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        auto truncated = bytes;
        truncated.resize(cut);
        EXPECT_THROW(decode_index(truncated), ParseError) << "cut at " << cut;
    }
}
