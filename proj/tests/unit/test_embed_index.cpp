#include "vidret/embed_index.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "vidret/random.hpp"

using namespace vidret;

namespace {

KeyframeId kf(const std::string& video, std::uint32_t idx) { return {video, idx, idx * 25, idx * 1000ull}; }

std::vector<float> random_vec(Rng& rng, int dim) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::InvalidArgument;
}

} // namespace

TEST(EmbeddingSpace, NormalizesOnAdd) {
    EmbeddingSpace s("clip", 2);
    s.add(kf("v", 0), std::vector<float>{3.f, 4.f});
    EXPECT_FLOAT_EQ(s.row(0)[0], 0.6f);
    EXPECT_FLOAT_EQ(s.row(0)[1], 0.8f);
}

TEST(EmbeddingSpace, AddErrors) {
    EmbeddingSpace s("clip", 2);
    s.add(kf("v", 0), std::vector<float>{1.f, 0.f});
    EXPECT_EQ(code_of([&] { s.add(kf("v", 0), std::vector<float>{0.f, 1.f}); }), ErrorCode::DuplicateId);
    EXPECT_EQ(code_of([&] { s.add(kf("v", 1), std::vector<float>{0.f, 0.f}); }), ErrorCode::ZeroVector);
    EXPECT_EQ(code_of([&] { s.add(kf("v", 2), std::vector<float>{1.f}); }), ErrorCode::DimensionMismatch);
    // Batch is all-or-nothing.
    EXPECT_EQ(code_of([&] {
                  s.add_vectors({{kf("w", 0), {1.f, 1.f}}, {kf("w", 1), {0.f, 0.f}}});
              }),
              ErrorCode::ZeroVector);
    EXPECT_EQ(s.size(), 1u);
}

TEST(EmbeddingSpace, OrthogonalBasis) {
    EmbeddingSpace s("clip", 2);
    s.add_vectors({{kf("v", 1), {1.f, 0.f}}, {kf("v", 2), {0.f, 1.f}}, {kf("v", 3), {-1.f, 0.f}}});
    const auto r = s.search(std::vector<float>{1.f, 0.f}, 2);
    ASSERT_EQ(r.hits.size(), 2u);
    EXPECT_EQ(r.hits[0].id, kf("v", 1));
    EXPECT_DOUBLE_EQ(r.hits[0].score, 1.0);
    EXPECT_EQ(r.hits[1].id, kf("v", 2));
    EXPECT_DOUBLE_EQ(r.hits[1].score, 0.0);
    EXPECT_EQ(s.search(std::vector<float>{1.f, 0.f}, 10).hits.size(), 3u);
    EXPECT_EQ(r.space, "clip");
}

TEST(EmbeddingSpace, TiesBrokenById) {
    EmbeddingSpace s("clip", 2);
    s.add_vectors({{kf("b", 0), {0.f, 1.f}}, {kf("a", 5), {0.f, 1.f}}, {kf("a", 2), {0.f, 1.f}}});
    const auto r = s.search(std::vector<float>{0.f, 2.f}, 3);
    EXPECT_EQ(r.hits[0].id, kf("a", 2));
    EXPECT_EQ(r.hits[1].id, kf("a", 5));
    EXPECT_EQ(r.hits[2].id, kf("b", 0));
}

TEST(EmbeddingSpace, QueryErrors) {
    EmbeddingSpace s("clip", 2);
    s.add(kf("v", 0), std::vector<float>{1.f, 0.f});
    EXPECT_EQ(code_of([&] { s.search(std::vector<float>{0.f, 0.f}, 1); }), ErrorCode::ZeroVector);
    EXPECT_EQ(code_of([&] { s.search(std::vector<float>{1.f, 0.f, 0.f}, 1); }), ErrorCode::DimensionMismatch);
}

TEST(EmbeddingSpace, MatchesBruteForceFullSort) {
    Rng rng(17);
    const int dim = 64;
    EmbeddingSpace s("clip", dim);
    std::vector<std::vector<double>> unit;
    for (std::uint32_t i = 0; i < 1000; ++i) {
        auto v = random_vec(rng, dim);
        s.add(kf("v" + std::to_string(i % 7), i), v);
    }
    for (std::size_t i = 0; i < s.size(); ++i) unit.emplace_back(s.row(i).begin(), s.row(i).end());
    for (int q = 0; q < 50; ++q) {
        const auto query = random_vec(rng, dim);
        double qn = 0.0;
        for (float x : query) qn += double(x) * x;
        qn = std::sqrt(qn);
        std::vector<std::pair<double, KeyframeId>> all;
        for (std::size_t i = 0; i < unit.size(); ++i) {
            double dot = 0.0;
            for (int d = 0; d < dim; ++d) dot += unit[i][d] * (query[d] / qn);
            all.push_back({dot, s.ids()[i]});
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        const auto r = s.search(query, 25);
        ASSERT_EQ(r.hits.size(), 25u);
        for (std::size_t i = 0; i < 25; ++i) {
            EXPECT_EQ(r.hits[i].id, all[i].second);
            EXPECT_NEAR(r.hits[i].score, all[i].first, 1e-12);
        }
    }
}

TEST(EmbeddingSpace, SelfQueryRanksFirst) {
    Rng rng(8);
    EmbeddingSpace s("beit3", 32);
    for (std::uint32_t i = 0; i < 200; ++i) s.add(kf("v", i), random_vec(rng, 32));
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::vector<float> q(s.row(i).begin(), s.row(i).end());
        const auto r = s.search(q, 1);
        EXPECT_EQ(r.hits[0].id, s.ids()[i]);
        EXPECT_NEAR(r.hits[0].score, 1.0, 1e-5);
    }
}

TEST(SpaceFile, RoundTripBitExact) {
    Rng rng(3);
    EmbeddingSpace s("clip", 5);
    s.add({"video_a", 0, 0, 0}, random_vec(rng, 5));
    s.add({"video_a", 1, 48, 1920}, random_vec(rng, 5));
    s.add({"vid\xc3\xa9o", 7, 300, 12000}, random_vec(rng, 5));
    const auto path = (std::filesystem::temp_directory_path() / "vidret_space_test.ems").string();
    save_space(s, path);
    const auto back = load_space(path, "clip");
    EXPECT_TRUE(back == s);
    EXPECT_EQ(back.ids()[2].video_id, "vid\xc3\xa9o");
    EXPECT_EQ(back.ids()[1].timestamp_ms, 1920u);
    std::filesystem::remove(path);
}

TEST(SpaceFile, FormatErrors) {
    EmbeddingSpace s("clip", 2);
    s.add(kf("v", 0), std::vector<float>{1.f, 2.f});
    s.add(kf("v", 1), std::vector<float>{2.f, 1.f});
    const auto bytes = encode_space(s);
    EXPECT_EQ(code_of([&] { decode_space(bytes.substr(0, bytes.size() - 3), "x"); }), ErrorCode::FormatError);
    EXPECT_EQ(code_of([&] { decode_space("EMS2" + bytes.substr(4), "x"); }), ErrorCode::FormatError);
    EXPECT_EQ(code_of([&] { decode_space(bytes + "junk", "x"); }), ErrorCode::FormatError);
    EXPECT_EQ(code_of([&] { load_space("/nonexistent/dir/space.ems", "x"); }), ErrorCode::IoError);
}

TEST(SpaceFile, LittleEndianLayout) {
    EmbeddingSpace s("x", 1);
    s.add({"ab", 3, 4, 5}, std::vector<float>{1.f});
    const auto b = encode_space(s);
    ASSERT_EQ(b.size(), 4u + 4 + 4 + 2 + 2 + 4 + 4 + 8 + 4);
    EXPECT_EQ(b.substr(0, 4), "EMS1");
    EXPECT_EQ(static_cast<unsigned char>(b[4]), 1u); // dim
    EXPECT_EQ(static_cast<unsigned char>(b[8]), 1u); // count
    EXPECT_EQ(static_cast<unsigned char>(b[12]), 2u); // id length
    EXPECT_EQ(b.substr(14, 2), "ab");
    EXPECT_EQ(static_cast<unsigned char>(b[16]), 3u);
    EXPECT_EQ(static_cast<unsigned char>(b[20]), 4u);
    EXPECT_EQ(static_cast<unsigned char>(b[24]), 5u);
    // 1.0f = 0x3f800000 little-endian
    EXPECT_EQ(static_cast<unsigned char>(b[35]), 0x3fu);
    EXPECT_EQ(static_cast<unsigned char>(b[34]), 0x80u);
}
