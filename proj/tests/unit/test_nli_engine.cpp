#include "privmine/nli_engine.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <random>
#include <thread>

using namespace privmine;
using testsupport::fresh_dir;
using testsupport::write_file;

namespace {

ReviewCollection synthetic_reviews(std::size_t n, const std::string& prefix = "review") {
    std::vector<Review> reviews;
    for (std::size_t i = 0; i < n; ++i) {
        Review r;
        r.review_id = "id" + std::to_string(i);
        r.raw_text = prefix + " number " + std::to_string(i) + " about my data";
        reviews.push_back(r);
    }
    return ReviewCollection(reviews, "mem");
}

HypothesisSet small_set(int n) {
    std::vector<Hypothesis> hs;
    for (int i = 1; i <= n; ++i) hs.push_back({i, "c", "Hypothesis " + std::to_string(i) + "."});
    return HypothesisSet("small", {{"c", "C", ""}}, hs, HypothesisProvenance::user_supplied);
}

// Fails every pair after the first `budget` pairs.
class FlakyBackend final : public NliBackend {
public:
    FlakyBackend(std::uint64_t seed, std::size_t budget) : m_inner(seed), m_budget(budget) {}
    const std::string& model_id() const override { return m_inner.model_id(); }
    std::vector<ProbabilityTriple> score(std::string_view premise,
                                         std::span<const std::string> hypotheses) override {
        if (m_used.fetch_add(hypotheses.size()) + hypotheses.size() > m_budget)
            throw BackendError("scripted outage");
        return m_inner.score(premise, hypotheses);
    }
    using NliBackend::score;

private:
    MockNliBackend m_inner;
    std::size_t m_budget;
    std::atomic<std::size_t> m_used{0};
};

class StubServer {
public:
    explicit StubServer(httplib::Server::Handler handler) {
        m_server.Post("/nli", std::move(handler));
        m_port = m_server.bind_to_any_port("127.0.0.1");
        m_thread = std::thread([this] { m_server.listen_after_bind(); });
        m_server.wait_until_ready();
    }
    ~StubServer() {
        m_server.stop();
        m_thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(m_port) + "/nli"; }

private:
    httplib::Server m_server;
    int m_port = 0;
    std::thread m_thread;
};

HttpBackendOptions fast_options(const std::string& url) {
    HttpBackendOptions o;
    o.endpoint = url;
    o.model_id = "stub-nli";
    o.timeout = std::chrono::milliseconds(2000);
    o.max_retries = 3;
    o.backoff_base = std::chrono::milliseconds(1);
    return o;
}

json scores_reply(const json& request, ProbabilityTriple t) {
    json scores = json::array();
    for (std::size_t i = 0; i < request.at("hypotheses").size(); ++i)
        scores.push_back({{"entail", t.entail}, {"neutral", t.neutral}, {"contradict", t.contradict}});
    return json{{"model_id", "stub-nli"}, {"scores", scores}};
}

} // namespace

TEST_CASE("mock backend determinism and normalization") {
    MockNliBackend a(1);
    MockNliBackend b(1);
    MockNliBackend other(2);
    std::mt19937 rng(99);
    std::size_t differing = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::string premise = "premise " + std::to_string(rng());
        const std::string hyp = "hypothesis " + std::to_string(rng() % 50);
        const auto t1 = a.score(premise, hyp);
        const auto t2 = b.score(premise, hyp);
        CHECK(t1 == t2);
        CHECK(std::abs(t1.entail + t1.neutral + t1.contradict - 1.0) < 1e-9);
        for (double p : {t1.entail, t1.neutral, t1.contradict}) CHECK((p >= 0 && p <= 1));
        if (i < 100 && !(other.score(premise, hyp) == t1)) ++differing;
    }
    CHECK(differing >= 99);
    CHECK(a.model_id() == "mock-nli-seed1");
    CHECK(a.pair_calls() == 1000);
}

TEST_CASE("probability triple checks") {
    CHECK_THROWS_AS(checked_probabilities({1.2, 0.1, 0.1}), ValidationError);
    CHECK_THROWS_AS(checked_probabilities({-0.1, 0.6, 0.5}), ValidationError);
    CHECK_THROWS_AS(checked_probabilities({NAN, 0.5, 0.5}), ValidationError);
    const auto ok = checked_probabilities({0.7, 0.2, 0.1});
    CHECK(ok.entail == doctest::Approx(0.7));
    const auto fixed = checked_probabilities({0.5, 0.3, 0.3});
    CHECK(fixed.entail + fixed.neutral + fixed.contradict == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fixed.entail == doctest::Approx(0.5 / 1.1));
    const auto tiny = checked_probabilities({0.5, 0.3, 0.2005});
    CHECK(tiny.entail == 0.5);
}

TEST_CASE("score matrix completeness") {
    EntailmentRecord r{"a", 1, {0.5, 0.3, 0.2}, "m"};
    CHECK_THROWS_AS(ScoreMatrix({"a", "b"}, {1}, {r}), ValidationError);
    auto r2 = r;
    r2.review_id = "b";
    CHECK_NOTHROW(ScoreMatrix({"a", "b"}, {1}, {r, r2}));
    CHECK_THROWS_AS(ScoreMatrix({"a", "b"}, {1}, {r2, r}), ValidationError);
    CHECK_THROWS_AS(ScoreMatrix::from_records({r, r}), ValidationError);
    const auto m = ScoreMatrix::from_records({r2, r});
    CHECK(m.rows() == 2);
    CHECK(m.at(0, 0).review_id == "b");
}

TEST_CASE("premise truncation keeps the head") {
    CHECK(truncate_premise("one two  three\tfour", 2) == "one two");
    CHECK(truncate_premise("  one two", 5) == "  one two");
    CHECK(truncate_premise("  one two three", 2) == "  one two");
    CHECK(truncate_premise("one two three", 0) == "one two three");
    CHECK(truncate_premise("", 3) == "");
}

TEST_CASE("score_corpus: completeness, caching and byte-identical warm runs") {
    const auto dir = fresh_dir("nli");
    const auto reviews = synthetic_reviews(3);
    const auto set = small_set(5);
    MockNliBackend backend(11);

    ScoreStats cold_stats;
    ScoreMatrix cold;
    {
        ScoreCache cache(dir / "cache.jsonl");
        cold = score_corpus(reviews, set, backend, cache, {}, &cold_stats);
    }
    CHECK(cold.records().size() == 15);
    CHECK(cold_stats.backend_pairs == 15);
    CHECK(backend.pair_calls() == 15);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t h = 0; h < 5; ++h) {
            CHECK(cold.at(r, h).review_id == reviews[r].review_id);
            CHECK(cold.at(r, h).hypothesis_id == set.hypotheses()[h].hypothesis_id);
        }
    cold.save(dir / "cold.jsonl");

    ScoreCache reloaded(dir / "cache.jsonl");
    CHECK(reloaded.size() == 15);
    ScoreStats warm_stats;
    const auto warm = score_corpus(reviews, set, backend, reloaded, {}, &warm_stats);
    CHECK(backend.pair_calls() == 15);
    CHECK(warm_stats.cache_hits == 15);
    warm.save(dir / "warm.jsonl");
    CHECK(read_text(dir / "cold.jsonl") == read_text(dir / "warm.jsonl"));
    CHECK(ScoreMatrix::load(dir / "warm.jsonl") == cold);
}

TEST_CASE("score_corpus rejects empty input") {
    MockNliBackend backend(1);
    ScoreCache cache;
    CHECK_THROWS_WITH_AS(score_corpus(ReviewCollection({}, "mem"), small_set(2), backend, cache),
                         "empty collection", ValidationError);
}

TEST_CASE("clean_text is the premise and changed inputs are re-scored") {
    auto base = synthetic_reviews(2);
    std::vector<Review> cleaned(base.begin(), base.end());
    for (auto& r : cleaned) r.clean_text = "cleaned " + r.review_id;
    const ReviewCollection clean(cleaned, "mem");
    MockNliBackend backend(5);
    ScoreCache cache;
    const auto raw_matrix = score_corpus(base, small_set(2), backend, cache);
    const auto clean_matrix = score_corpus(clean, small_set(2), backend, cache);
    CHECK(backend.pair_calls() == 8);
    CHECK(clean_matrix.at(0, 0).probabilities ==
          MockNliBackend(5).score("cleaned id0", small_set(2).hypotheses()[0].text));
    CHECK_FALSE(raw_matrix == clean_matrix);
}

TEST_CASE("parallel workers give the same matrix as one worker") {
    const auto reviews = synthetic_reviews(60);
    const auto set = small_set(7);
    MockNliBackend backend(3);
    ScoreCache c1;
    ScoreCache c8;
    const auto one = score_corpus(reviews, set, backend, c1, ScoreOptions{1});
    const auto many = score_corpus(reviews, set, backend, c8, ScoreOptions{8});
    CHECK(one == many);
}

TEST_CASE("backend failure part-way is resumable from the cache") {
    const auto dir = fresh_dir("nli-resume");
    const auto reviews = synthetic_reviews(10);
    const auto set = small_set(4);
    {
        FlakyBackend flaky(9, 17);
        ScoreCache cache(dir / "cache.jsonl");
        try {
            score_corpus(reviews, set, flaky, cache);
            FAIL("expected a scoring error");
        } catch (const ScoringError& e) {
            CHECK(e.total() == 40);
            CHECK(e.completed() == 16);
        }
    }
    MockNliBackend healthy(9);
    ScoreCache cache(dir / "cache.jsonl");
    CHECK(cache.size() == 16);
    ScoreStats stats;
    const auto m = score_corpus(reviews, set, healthy, cache, {}, &stats);
    CHECK(stats.cache_hits == 16);
    CHECK(stats.backend_pairs == 24);
    MockNliBackend fresh(9);
    ScoreCache empty;
    CHECK(m == score_corpus(reviews, set, fresh, empty));
}

TEST_CASE("cache journal tolerates a torn final line") {
    const auto dir = fresh_dir("nli-torn");
    {
        ScoreCache cache(dir / "cache.jsonl");
        cache.insert({"a", 1, {0.5, 0.25, 0.25}, "m"}, 42);
        cache.insert({"a", 2, {0.1, 0.8, 0.1}, "m"}, 43);
    }
    {
        std::ofstream out(dir / "cache.jsonl", std::ios::app);
        out << "{\"review_id\":\"a\",\"hypo";
    }
    ScoreCache cache(dir / "cache.jsonl");
    CHECK(cache.recovered_torn_tail());
    CHECK(cache.size() == 2);
    CHECK(cache.lookup("a", 1, "m", 42).has_value());
    CHECK_FALSE(cache.lookup("a", 1, "m", 41).has_value());
    CHECK_FALSE(cache.lookup("a", 1, "other-model", 42).has_value());
    cache.insert({"b", 1, {0.2, 0.3, 0.5}, "m"}, 44);
    ScoreCache again(dir / "cache.jsonl");
    CHECK(again.size() == 3);
}

TEST_CASE("concurrent cache readers and writers") {
    ScoreCache cache;
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&cache, t] {
            for (int i = 0; i < 500; ++i) {
                cache.insert({"r" + std::to_string(t), i, {0.2, 0.3, 0.5}, "m"}, 1);
                cache.lookup("r" + std::to_string((t + 1) % 8), i, "m", 1);
            }
        });
    for (auto& th : threads) th.join();
    CHECK(cache.size() == 4000);
}

TEST_CASE("http backend against a stub server") {
    SUBCASE("pass-through of a valid triple") {
        StubServer server([](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            CHECK(body.at("premise") == "my data was sold");
            res.set_content(scores_reply(body, {0.7, 0.2, 0.1}).dump(), "application/json");
        });
        HttpNliBackend backend(fast_options(server.url()));
        const auto t = backend.score("my data was sold", std::string("Data is shared."));
        CHECK(t.entail == doctest::Approx(0.7));
        CHECK(t.neutral == doctest::Approx(0.2));
        CHECK(t.contradict == doctest::Approx(0.1));
        CHECK(backend.attempts() == 1);
    }
    SUBCASE("non-probability payload is rejected") {
        StubServer server([](const httplib::Request& req, httplib::Response& res) {
            res.set_content(scores_reply(json::parse(req.body), {1.2, 0.1, 0.1}).dump(), "application/json");
        });
        HttpNliBackend backend(fast_options(server.url()));
        CHECK_THROWS_AS(backend.score("p", std::string("h")), MalformedResponseError);
    }
    SUBCASE("two transient failures then success") {
        std::atomic<int> calls{0};
        StubServer server([&calls](const httplib::Request& req, httplib::Response& res) {
            if (calls++ < 2) {
                res.status = 503;
                return;
            }
            res.set_content(scores_reply(json::parse(req.body), {0.6, 0.3, 0.1}).dump(), "application/json");
        });
        HttpNliBackend backend(fast_options(server.url()));
        CHECK(backend.score("p", std::string("h")).entail == doctest::Approx(0.6));
        CHECK(backend.attempts() == 3);
    }
    SUBCASE("retries are bounded") {
        std::atomic<int> calls{0};
        StubServer server([&calls](const httplib::Request&, httplib::Response& res) {
            ++calls;
            res.status = 500;
        });
        auto options = fast_options(server.url());
        options.max_retries = 2;
        HttpNliBackend backend(options);
        CHECK_THROWS_AS(backend.score("p", std::string("h")), BackendError);
        CHECK(calls == 3);
    }
    SUBCASE("client errors are not retried") {
        std::atomic<int> calls{0};
        StubServer server([&calls](const httplib::Request&, httplib::Response& res) {
            ++calls;
            res.status = 400;
        });
        HttpNliBackend backend(fast_options(server.url()));
        CHECK_THROWS_AS(backend.score("p", std::string("h")), BackendError);
        CHECK(calls == 1);
    }
    SUBCASE("timeout") {
        StubServer server([](const httplib::Request& req, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(600));
            res.set_content(scores_reply(json::parse(req.body), {0.6, 0.3, 0.1}).dump(), "application/json");
        });
        auto options = fast_options(server.url());
        options.timeout = std::chrono::milliseconds(150);
        options.max_retries = 1;
        HttpNliBackend backend(options);
        CHECK_THROWS_AS(backend.score("p", std::string("h")), BackendError);
        CHECK(backend.attempts() == 2);
    }
    SUBCASE("malformed bodies") {
        std::atomic<int> mode{0};
        StubServer server([&mode](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            switch (mode.load()) {
                case 0: res.set_content("not json", "application/json"); break;
                case 1: res.set_content(R"({"model_id":"stub-nli"})", "application/json"); break;
                case 2: {
                    auto reply = scores_reply(body, {0.5, 0.3, 0.2});
                    reply["model_id"] = "some-other-model";
                    res.set_content(reply.dump(), "application/json");
                    break;
                }
                default: {
                    auto reply = scores_reply(body, {0.5, 0.3, 0.2});
                    reply["scores"].push_back(reply["scores"][0]);
                    res.set_content(reply.dump(), "application/json");
                }
            }
        });
        HttpNliBackend backend(fast_options(server.url()));
        for (int m = 0; m < 4; ++m) {
            mode = m;
            CAPTURE(m);
            CHECK_THROWS_AS(backend.score("p", std::string("h")), MalformedResponseError);
        }
    }
    SUBCASE("hypotheses are chunked and never truncated") {
        std::atomic<int> requests{0};
        StubServer server([&requests](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            const auto body = json::parse(req.body);
            CHECK(body.at("hypotheses").size() <= 4);
            CHECK(body.at("hypotheses")[0].get<std::string>().starts_with("Hypothesis"));
            res.set_content(scores_reply(body, {0.4, 0.4, 0.2}).dump(), "application/json");
        });
        auto options = fast_options(server.url());
        options.hypotheses_per_request = 4;
        options.max_premise_tokens = 3;
        HttpNliBackend backend(options);
        ScoreCache cache;
        const auto m = score_corpus(synthetic_reviews(2), small_set(10), backend, cache);
        CHECK(m.records().size() == 20);
        CHECK(requests == 6);
    }
    CHECK_THROWS_AS(HttpNliBackend(fast_options("ftp://x/nli")), ValidationError);
    auto no_model = fast_options("http://127.0.0.1:1/nli");
    no_model.model_id.clear();
    CHECK_THROWS_AS(HttpNliBackend{no_model}, ValidationError);
}
