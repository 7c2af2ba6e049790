#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "vecfold/corpus.hpp"
#include "vecfold/error.hpp"
#include "vecfold/synth.hpp"

using namespace vecfold;
using oracle::TempDir;

namespace {

std::filesystem::path write_lines(const TempDir& dir, const std::vector<std::string>& lines) {
    const auto path = dir / "corpus.jsonl";
    std::ofstream out(path);
    for (const auto& l : lines) out << l << "\n";
    return path;
}

} // namespace

TEST(LoadCorpus, TwoRecordsInOrder) {
    TempDir dir;
    const auto path = write_lines(dir, {R"({"id":"b","platform":"offerup","title":"rims"})",
                                        R"({"id":"a","platform":"craigslist","body":"seat","images":["x.jpg"]})"});
    const auto c = corpus::load_corpus(path, true);
    ASSERT_EQ(c->size(), 2u);
    EXPECT_EQ((*c)[0].id, "b");
    EXPECT_EQ((*c)[1].id, "a");
    EXPECT_EQ((*c)[1].images, std::vector<std::string>{"x.jpg"});
    EXPECT_EQ(c->find("a"), std::optional<std::size_t>(1));
    EXPECT_FALSE(c->find("zzz").has_value());
}

TEST(LoadCorpus, MissingIdOnLineFiveStrict) {
    TempDir dir;
    std::vector<std::string> lines;
    for (int i = 0; i < 4; ++i) lines.push_back(R"({"id":"p)" + std::to_string(i) + R"(","platform":"offerup","title":"t"})");
    lines.push_back(R"({"platform":"offerup","title":"t"})");
    const auto path = write_lines(dir, lines);
    try {
        corpus::load_corpus(path, true);
        FAIL() << "expected SchemaViolation";
    } catch (const SchemaViolation& e) {
        EXPECT_EQ(e.line(), 5u);
        EXPECT_EQ(e.field(), "id");
    }
    const auto lenient = corpus::load_corpus(path, false);
    EXPECT_EQ(lenient->size(), 4u);
    ASSERT_EQ(lenient->skipped().size(), 1u);
    EXPECT_EQ(lenient->skipped()[0].line, 5u);
    EXPECT_EQ(lenient->skipped()[0].field, "id");
}

TEST(LoadCorpus, EmptyFileAndBlankLines) {
    TempDir dir;
    const auto path = write_lines(dir, {});
    const auto c = corpus::load_corpus(path, true);
    EXPECT_EQ(c->size(), 0u);
    const auto stats = corpus::corpus_stats(*c);
    EXPECT_EQ(stats, corpus::CorpusStats{});

    const auto with_blanks =
        write_lines(dir, {"", R"({"id":"a","platform":"other","title":"x"})", "   ", R"({"platform":"x"})"});
    try {
        corpus::load_corpus(with_blanks, true);
        FAIL();
    } catch (const SchemaViolation& e) {
        EXPECT_EQ(e.line(), 4u);
    }
}

TEST(LoadCorpus, DuplicateIds) {
    TempDir dir;
    const auto path = write_lines(dir, {R"({"id":"a","platform":"offerup","title":"x"})",
                                        R"({"id":"b","platform":"offerup","title":"y"})",
                                        R"({"id":"a","platform":"offerup","title":"z"})"});
    try {
        corpus::load_corpus(path, true);
        FAIL();
    } catch (const DuplicateId& e) {
        EXPECT_EQ(e.id(), "a");
        EXPECT_EQ(e.first_line(), 1u);
        EXPECT_EQ(e.second_line(), 3u);
    }
    const auto c = corpus::load_corpus(path, false);
    EXPECT_EQ(c->size(), 2u);
    EXPECT_EQ((*c)[0].title, "x");
    EXPECT_EQ(c->skipped().size(), 1u);
}

TEST(LoadCorpus, MalformedJsonAndUnknownKeys) {
    TempDir dir;
    const auto path = write_lines(dir, {R"({"id":"a","platform":"offerup","title":"x","color":"red"})", R"({"id":)"});
    const auto c = corpus::load_corpus(path, false);
    EXPECT_EQ(c->size(), 1u);
    EXPECT_EQ(c->unknown_keys(), 1u);
    ASSERT_EQ(c->skipped().size(), 1u);
    EXPECT_EQ(c->skipped()[0].line, 2u);
    EXPECT_THROW(corpus::load_corpus(path, true), SchemaViolation);
}

TEST(LoadCorpus, UnreadableFile) {
    try {
        corpus::load_corpus("/nonexistent/corpus.jsonl", false);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::FileNotReadable);
    }
}

TEST(ParsePost, FieldValidation) {
    using nlohmann::json;
    auto field_of = [](const json& j) -> std::string {
        try {
            corpus::parse_post(j, 1);
        } catch (const SchemaViolation& e) {
            return e.field();
        }
        return "ok";
    };
    const json base = {{"id", "a"}, {"platform", "offerup"}, {"title", "t"}};
    EXPECT_EQ(field_of(base), "ok");
    auto j = base;
    j["platform"] = "ebay";
    EXPECT_EQ(field_of(j), "platform");
    j = base;
    j["title"] = "  ";
    EXPECT_EQ(field_of(j), "body");
    j = base;
    j["images"] = {"a.jpg", "a.jpg"};
    EXPECT_EQ(field_of(j), "images");
    j = base;
    j["images"] = {""};
    EXPECT_EQ(field_of(j), "images");
    j = base;
    j["price"] = -1;
    EXPECT_EQ(field_of(j), "price");
    j = base;
    j["price"] = "12";
    EXPECT_EQ(field_of(j), "price");
    j = base;
    j["posted_at"] = "yesterday";
    EXPECT_EQ(field_of(j), "posted_at");
    j = base;
    j["posted_at"] = "2023-04-01T10:20:30Z";
    EXPECT_EQ(field_of(j), "ok");
    j = base;
    j["id"] = "a\tb";
    EXPECT_EQ(field_of(j), "id");
    EXPECT_EQ(field_of(json::array()), "");
}

TEST(PostJson, RoundTrip) {
    corpus::Post p;
    p.id = "x1";
    p.platform = corpus::Platform::craigslist;
    p.title = "LED headlight";
    p.body = "pair";
    p.images = {"a.jpg", "b.jpg"};
    p.price = 40.5;
    p.posted_at = "2023-01-02T03:04:05Z";
    EXPECT_EQ(corpus::parse_post(corpus::post_to_json(p), 1), p);
}

TEST(Stats, HistogramAndPlatforms) {
    std::vector<corpus::Post> posts(3);
    posts[0] = {"a", corpus::Platform::offerup, "t", "", {}, {}, {}};
    posts[1] = {"b", corpus::Platform::offerup, "t", "", {"1"}, {}, {}};
    posts[2] = {"c", corpus::Platform::craigslist, "t", "", {"1", "2", "3"}, {}, {}};
    const corpus::Corpus c(posts, {}, 0);
    const auto s = corpus::corpus_stats(c);
    EXPECT_EQ(s.total_posts, 3u);
    EXPECT_EQ(s.image_count_histogram, (std::map<std::size_t, std::size_t>{{0, 1}, {1, 1}, {3, 1}}));
    EXPECT_EQ(s.posts_without_images, 1u);
    EXPECT_EQ(s.per_platform, (std::map<std::string, std::size_t>{{"offerup", 2}, {"craigslist", 1}}));
    const auto j = corpus::stats_to_json(s);
    EXPECT_EQ(j["image_count_histogram"]["3"], 1);
}

TEST(Synth, BalancedLabeledAndLoadable) {
    TempDir dir;
    const auto posts = synth::synthetic_corpus(800, 7);
    ASSERT_EQ(posts.size(), 800u);
    std::vector<std::size_t> per(4, 0);
    for (const auto& p : posts) ++per[p.category];
    EXPECT_EQ(per, (std::vector<std::size_t>{200, 200, 200, 200}));
    synth::write_synthetic_corpus(dir / "s.jsonl", posts);
    const auto c = corpus::load_corpus(dir / "s.jsonl", true);
    EXPECT_EQ(c->size(), 800u);
    EXPECT_EQ(c->unknown_keys(), 800u);
    const auto again = synth::synthetic_corpus(800, 7);
    EXPECT_EQ(again[123].post, posts[123].post);
}
