#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>

#include "dowser/corpus.hpp"
#include "dowser/jsonl.hpp"

using namespace dowser;
namespace fs = std::filesystem;

namespace {

std::string post_line(PostId id, const std::string& text, const char* type = "text",
                      AuthorId author = 1, std::int64_t created = 1700000000,
                      double popularity = 0.5) {
    Post p{id, text, *parse_post_type(type), author, created, popularity};
    return jsonl::serialize_post(p);
}

std::string interaction_line(const std::string& q, PostId post, double dwell,
                             int on_topic) {
    InteractionRecord r;
    r.query.text = q;
    r.query.searcher_id = 1;
    r.post_id = post;
    r.dwell_seconds = dwell;
    r.on_topic = on_topic;
    return jsonl::serialize_interaction(r);
}

}  // namespace

TEST(Ingest, ThreeValidLines) {
    CorpusStore store;
    std::stringstream in;
    in << post_line(1, "ask for raise") << "\n"
       << post_line(2, "quarterly earnings") << "\n"
       << post_line(3, "dropout in ai") << "\n";
    auto report = store.ingest_posts(in);
    EXPECT_EQ(report.stored, 3u);
    EXPECT_TRUE(report.errors.empty());
    EXPECT_EQ(store.size(), 3u);
}

TEST(Ingest, EmptyStream) {
    CorpusStore store;
    std::stringstream in;
    auto report = store.ingest_posts(in);
    EXPECT_EQ(report.stored, 0u);
    EXPECT_TRUE(report.errors.empty());
}

TEST(Ingest, DuplicateIdRejectedPerLine) {
    CorpusStore store;
    std::stringstream in;
    in << post_line(1, "first") << "\n"
       << post_line(2, "second") << "\n"
       << post_line(1, "dup of first") << "\n";
    auto report = store.ingest_posts(in);
    EXPECT_EQ(report.stored, 2u);
    ASSERT_EQ(report.errors.size(), 1u);
    EXPECT_EQ(report.errors[0].line_number, 3u);
    EXPECT_NE(report.errors[0].message.find("duplicate"), std::string::npos);
    // Original post untouched.
    EXPECT_EQ(store.get_post(1)->text, "first");
}

TEST(Ingest, MalformedLineReportedAndSkipped) {
    CorpusStore store;
    std::stringstream in;
    in << "{not json\n" << post_line(5, "fine") << "\n";
    auto report = store.ingest_posts(in);
    EXPECT_EQ(report.stored, 1u);
    ASSERT_EQ(report.errors.size(), 1u);
    EXPECT_EQ(report.errors[0].line_number, 1u);
}

TEST(Ingest, InvariantViolationsRejected) {
    CorpusStore store;
    std::stringstream in;
    in << post_line(1, "") << "\n" << post_line(2, "ok", "text", 1, 0, 1.5) << "\n";
    auto report = store.ingest_posts(in);
    EXPECT_EQ(report.stored, 0u);
    EXPECT_EQ(report.errors.size(), 2u);
}

TEST(Ingest, ReingestionIsIdempotent) {
    std::string file = post_line(1, "one") + "\n" + post_line(2, "two") + "\n";
    CorpusStore store;
    std::stringstream first(file);
    store.ingest_posts(first);
    std::stringstream second(file);
    auto report = store.ingest_posts(second);
    EXPECT_EQ(report.stored, 0u);
    EXPECT_EQ(report.errors.size(), 2u);
    EXPECT_EQ(store.size(), 2u);
}

TEST(GetPost, RoundTripsByteIdentical) {
    CorpusStore store;
    std::stringstream in;
    in << post_line(7, "exact text with unicode \xc3\xa9 and  spaces", "video", 9,
                    1712345678, 0.25)
       << "\n";
    store.ingest_posts(in);
    auto post = store.get_post(7);
    ASSERT_TRUE(post.has_value());
    EXPECT_EQ(post->text, "exact text with unicode \xc3\xa9 and  spaces");
    EXPECT_EQ(post->post_type, PostType::video);
    EXPECT_EQ(post->author_id, 9u);
    EXPECT_EQ(post->created_at, 1712345678);
    EXPECT_DOUBLE_EQ(post->popularity, 0.25);
}

TEST(GetPost, UnknownIdIsNotFound) {
    CorpusStore store;
    EXPECT_FALSE(store.get_post(42).has_value());
}

TEST(GetPost, ThousandPostsAllRoundTrip) {
    CorpusStore store;
    std::stringstream in;
    for (PostId id = 1; id <= 1000; ++id)
        in << post_line(id, "post body " + std::to_string(id)) << "\n";
    auto report = store.ingest_posts(in);
    ASSERT_EQ(report.stored, 1000u);
    for (PostId id = 1; id <= 1000; ++id) {
        auto post = store.get_post(id);
        ASSERT_TRUE(post.has_value()) << id;
        EXPECT_EQ(post->text, "post body " + std::to_string(id));
    }
}

TEST(AppendLog, SurvivesReopen) {
    fs::path log = fs::temp_directory_path() / "dowser_corpus_test.log";
    fs::remove(log);
    {
        CorpusStore store(log);
        std::stringstream in;
        in << post_line(1, "durable one") << "\n" << post_line(2, "durable two") << "\n";
        store.ingest_posts(in);
    }
    CorpusStore reopened(log);
    EXPECT_EQ(reopened.size(), 2u);
    EXPECT_EQ(reopened.get_post(1)->text, "durable one");
    EXPECT_EQ(reopened.get_post(2)->text, "durable two");
    fs::remove(log);
}

TEST(AppendLog, ToleratesTornTailLine) {
    fs::path log = fs::temp_directory_path() / "dowser_corpus_torn.log";
    fs::remove(log);
    {
        CorpusStore store(log);
        std::stringstream in;
        in << post_line(1, "whole") << "\n";
        store.ingest_posts(in);
    }
    {
        std::ofstream out(log, std::ios::app);
        out << "{\"post_id\": 2, \"text\": \"torn";  // no newline, invalid json
    }
    CorpusStore reopened(log);
    EXPECT_EQ(reopened.size(), 1u);
    EXPECT_EQ(reopened.corrupt_log_lines(), 1u);
    fs::remove(log);
}

TEST(Authors, PopularityIsMeanOfPosts) {
    CorpusStore store;
    std::stringstream in;
    in << post_line(1, "a", "text", 5, 0, 0.2) << "\n"
       << post_line(2, "b", "text", 5, 0, 0.8) << "\n"
       << post_line(3, "c", "text", 6, 0, 1.0) << "\n";
    store.ingest_posts(in);
    EXPECT_DOUBLE_EQ(store.author(5).popularity, 0.5);
    EXPECT_DOUBLE_EQ(store.author(6).popularity, 1.0);
    EXPECT_DOUBLE_EQ(store.author(999).popularity, 0.5);  // unknown default
}

TEST(Interactions, TwoValidRecords) {
    CorpusStore store;
    std::stringstream posts;
    posts << post_line(1, "a") << "\n" << post_line(2, "b") << "\n";
    store.ingest_posts(posts);
    std::stringstream in;
    in << interaction_line("query one", 1, 12.0, 1) << "\n"
       << interaction_line("query two", 2, 3.0, 0) << "\n";
    auto report = store.load_interactions(in);
    ASSERT_EQ(report.records.size(), 2u);
    EXPECT_TRUE(report.errors.empty());
    EXPECT_EQ(report.records[0].query.text, "query one");
    EXPECT_EQ(report.records[1].post_id, 2u);
}

TEST(Interactions, NegativeDwellRejected) {
    CorpusStore store;
    std::stringstream posts;
    posts << post_line(1, "a") << "\n";
    store.ingest_posts(posts);
    std::stringstream in;
    in << interaction_line("q", 1, -1.0, 1) << "\n";
    auto report = store.load_interactions(in);
    EXPECT_TRUE(report.records.empty());
    ASSERT_EQ(report.errors.size(), 1u);
    EXPECT_EQ(report.errors[0].line_number, 1u);
}

TEST(Interactions, DanglingPostIdRejected) {
    CorpusStore store;
    std::stringstream posts;
    posts << post_line(1, "a") << "\n";
    store.ingest_posts(posts);
    std::stringstream in;
    in << interaction_line("q", 1, 5.0, 1) << "\n"
       << interaction_line("q", 999, 5.0, 1) << "\n";
    auto report = store.load_interactions(in);
    EXPECT_EQ(report.records.size(), 1u);
    ASSERT_EQ(report.errors.size(), 1u);
    EXPECT_EQ(report.errors[0].line_number, 2u);
    EXPECT_NE(report.errors[0].message.find("unknown post_id"), std::string::npos);
}

TEST(Interactions, HundredRecordFixturePreservesOrder) {
    CorpusStore store;
    std::stringstream posts;
    for (PostId id = 1; id <= 100; ++id) posts << post_line(id, "p") << "\n";
    store.ingest_posts(posts);
    std::stringstream in;
    for (int i = 0; i < 100; ++i)
        in << interaction_line("query " + std::to_string(i), (i % 100) + 1, i, i % 2)
           << "\n";
    auto report = store.load_interactions(in);
    ASSERT_EQ(report.records.size(), 100u);
    for (int i = 0; i < 100; ++i)
        EXPECT_EQ(report.records[i].query.text, "query " + std::to_string(i));
}

TEST(Interactions, DerivesJobTitleFlag) {
    CorpusStore store;
    std::stringstream posts;
    posts << post_line(1, "a") << "\n";
    store.ingest_posts(posts);
    std::stringstream in;
    in << interaction_line("engineer salary bands", 1, 5.0, 1) << "\n";
    auto report = store.load_interactions(in);
    ASSERT_EQ(report.records.size(), 1u);
    EXPECT_TRUE(report.records[0].query.contains_job_title);
}

TEST(Searcher, SelfConnectionInvalid) {
    Searcher s;
    s.searcher_id = 3;
    s.connections = {1, 2, 3};
    EXPECT_TRUE(validate_searcher(s).has_value());
    s.connections = {1, 2};
    EXPECT_FALSE(validate_searcher(s).has_value());
}
