#include "privmine/evaluation.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

using namespace privmine;
using testsupport::fresh_dir;
using testsupport::write_file;

namespace {

std::vector<Label> labels(std::initializer_list<int> bits) {
    std::vector<Label> out;
    for (int b : bits) out.push_back(b ? Label::privacy : Label::not_privacy);
    return out;
}

double safe_div(double a, double b) { return b == 0 ? 0.0 : a / b; }

// Per-class metrics straight from the label vectors, treating `cls` as positive.
ClassMetrics oracle_class(const std::vector<Label>& gold, const std::vector<Label>& pred, Label cls) {
    double tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (pred[i] == cls) predicted += 1;
        if (gold[i] == cls) actual += 1;
        if (pred[i] == cls && gold[i] == cls) tp += 1;
    }
    ClassMetrics m;
    m.precision = safe_div(tp, predicted);
    m.recall = safe_div(tp, actual);
    m.f1 = safe_div(2 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

// Chance agreement as the fraction of all n*n cross pairs that agree.
double oracle_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
    const double n = static_cast<double>(a.size());
    double agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
    double cross = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) cross += a[i] == b[j];
    const double p_o = agree / n;
    const double p_e = cross / (n * n);
    if (p_e == 1.0) return p_o == 1.0 ? 1.0 : 0.0;
    return (p_o - p_e) / (1 - p_e);
}

std::vector<Label> random_labels(std::mt19937& rng, std::size_t n, double p) {
    std::bernoulli_distribution d(p);
    std::vector<Label> out(n);
    for (auto& l : out) l = d(rng) ? Label::privacy : Label::not_privacy;
    return out;
}

std::vector<Label> swapped(std::vector<Label> v) {
    for (auto& l : v) l = flip(l);
    return v;
}

} // namespace

TEST_CASE("confusion examples") {
    const auto m = confusion(labels({1, 1, 0, 0}), labels({1, 0, 0, 0}));
    CHECK(m.tp == 1);
    CHECK(m.fn == 1);
    CHECK(m.fp == 0);
    CHECK(m.tn == 2);
    const auto same = confusion(labels({1, 0, 1}), labels({1, 0, 1}));
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    CHECK_THROWS_AS(confusion(labels({1}), labels({1, 0})), ValidationError);
    CHECK_THROWS_AS(confusion(labels({}), labels({})), ValidationError);
}

TEST_CASE("macro metrics examples") {
    const auto perfect = macro_prf(confusion(labels({1, 0, 1, 0}), labels({1, 0, 1, 0})));
    CHECK(perfect.macro_p == 1.0);
    CHECK(perfect.macro_r == 1.0);
    CHECK(perfect.macro_f1 == 1.0);

    const auto all_pos = macro_prf(confusion(labels({1, 1, 0, 0}), labels({1, 1, 1, 1})));
    CHECK(all_pos.privacy.precision == doctest::Approx(0.5));
    CHECK(all_pos.privacy.recall == doctest::Approx(1.0));
    CHECK(all_pos.privacy.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(all_pos.not_privacy.precision == 0.0);
    CHECK(all_pos.not_privacy.recall == 0.0);
    CHECK(all_pos.not_privacy.f1 == 0.0);
    CHECK(all_pos.macro_p == doctest::Approx(0.25));
    CHECK(all_pos.macro_r == doctest::Approx(0.5));
    CHECK(all_pos.macro_f1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("metrics match brute-force oracles on random inputs") {
    std::mt19937 rng(777);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng() % 200;
        const auto gold = random_labels(rng, n, 0.1 + 0.8 * (rng() % 100) / 100.0);
        const auto pred = random_labels(rng, n, 0.1 + 0.8 * (rng() % 100) / 100.0);
        const auto cm = confusion(gold, pred);
        std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool g = gold[i] == Label::privacy, p = pred[i] == Label::privacy;
            tp += g && p;
            fp += !g && p;
            fn += g && !p;
            tn += !g && !p;
        }
        CHECK(cm.tp == tp);
        CHECK(cm.fp == fp);
        CHECK(cm.fn == fn);
        CHECK(cm.tn == tn);
        CHECK(cm.total() == n);

        const auto report = macro_prf(cm);
        const auto pos = oracle_class(gold, pred, Label::privacy);
        const auto neg = oracle_class(gold, pred, Label::not_privacy);
        CHECK(std::abs(report.privacy.precision - pos.precision) < 1e-9);
        CHECK(std::abs(report.privacy.recall - pos.recall) < 1e-9);
        CHECK(std::abs(report.privacy.f1 - pos.f1) < 1e-9);
        CHECK(std::abs(report.not_privacy.precision - neg.precision) < 1e-9);
        CHECK(std::abs(report.not_privacy.recall - neg.recall) < 1e-9);
        CHECK(std::abs(report.not_privacy.f1 - neg.f1) < 1e-9);
        CHECK(std::abs(report.macro_p - (pos.precision + neg.precision) / 2) < 1e-9);
        CHECK(std::abs(report.macro_r - (pos.recall + neg.recall) / 2) < 1e-9);
        CHECK(std::abs(report.macro_f1 - (pos.f1 + neg.f1) / 2) < 1e-9);

        const auto k = cohens_kappa(gold, pred);
        CHECK(std::abs(k.kappa - oracle_kappa(gold, pred)) < 1e-9);
        CHECK(k.kappa >= -1.0);
        CHECK(k.kappa <= 1.0);
        CHECK(k.kappa == doctest::Approx(cohens_kappa(pred, gold).kappa).epsilon(1e-12));
        CHECK(std::abs(k.kappa - cohens_kappa(swapped(gold), swapped(pred)).kappa) < 1e-12);
        CHECK(cohens_kappa(gold, gold).kappa == 1.0);
    }
}

TEST_CASE("kappa fixed points") {
    CHECK(cohens_kappa(labels({1, 0, 1, 1}), labels({1, 0, 1, 1})).kappa == 1.0);
    CHECK(cohens_kappa(labels({1, 1, 0, 0}), labels({0, 0, 1, 1})).kappa == doctest::Approx(-1.0));
    CHECK(cohens_kappa(labels({1, 1, 1}), labels({1, 1, 1})).kappa == 1.0);
    CHECK(cohens_kappa(labels({1, 1, 1}), labels({0, 0, 0})).kappa == 0.0);
    // Constant predictor: observed agreement equals chance, kappa is exactly 0.
    CHECK(cohens_kappa(labels({1, 1, 0, 1, 1, 0}), labels({0, 0, 0, 0, 0, 0})).kappa == 0.0);
    CHECK(cohens_kappa(labels({1, 0, 1, 0, 1, 0, 1, 0, 1}), labels({1, 1, 1, 1, 1, 1, 1, 1, 1})).kappa == 0.0);

    // 40 both-privacy, 10 privacy/not, 5 not/privacy, 45 both-not.
    std::vector<Label> a, b;
    auto add = [&](int n, Label x, Label y) {
        for (int i = 0; i < n; ++i) {
            a.push_back(x);
            b.push_back(y);
        }
    };
    add(40, Label::privacy, Label::privacy);
    add(10, Label::privacy, Label::not_privacy);
    add(5, Label::not_privacy, Label::privacy);
    add(45, Label::not_privacy, Label::not_privacy);
    const auto k = cohens_kappa(a, b);
    CHECK(k.p_o == doctest::Approx(0.85));
    CHECK(k.p_e == doctest::Approx(0.50));
    CHECK(k.kappa == doctest::Approx(0.70));
    CHECK(std::abs(k.kappa - oracle_kappa(a, b)) < 1e-12);
    CHECK(k.band == AgreementBand::substantial);
    CHECK_THROWS_AS(cohens_kappa(labels({1}), labels({})), ValidationError);
}

TEST_CASE("kappa bands") {
    CHECK(interpret_kappa(0.71) == AgreementBand::substantial);
    CHECK(interpret_kappa(-0.2) == AgreementBand::less_than_chance);
    CHECK(interpret_kappa(0.0) == AgreementBand::less_than_chance);
    CHECK(interpret_kappa(0.005) == AgreementBand::slight);
    CHECK(interpret_kappa(0.20) == AgreementBand::slight);
    CHECK(interpret_kappa(0.205) == AgreementBand::fair);
    CHECK(interpret_kappa(0.40) == AgreementBand::fair);
    CHECK(interpret_kappa(0.41) == AgreementBand::moderate);
    CHECK(interpret_kappa(0.60) == AgreementBand::moderate);
    CHECK(interpret_kappa(0.61) == AgreementBand::substantial);
    CHECK(interpret_kappa(0.80) == AgreementBand::substantial);
    CHECK(interpret_kappa(0.81) == AgreementBand::almost_perfect);
    CHECK(interpret_kappa(1.0) == AgreementBand::almost_perfect);
    CHECK_THROWS_AS(interpret_kappa(1.01), ValidationError);
    CHECK_THROWS_AS(interpret_kappa(-1.5), ValidationError);
    CHECK(to_string(AgreementBand::almost_perfect) == "almost-perfect");
    CHECK(to_string(AgreementBand::less_than_chance) == "less-than-chance");
}

TEST_CASE("bigrams") {
    auto make = [](std::vector<std::string> texts) {
        std::vector<Review> rs;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            Review r;
            r.review_id = "b" + std::to_string(i);
            r.raw_text = texts[i];
            r.clean_text = texts[i];
            rs.push_back(r);
        }
        return ReviewCollection(rs, "mem");
    };
    const auto top = bigram_report(make({"credit card stolen", "credit card charged"}), 10);
    REQUIRE(!top.empty());
    CHECK(top[0] == BigramCount{"credit card", 2});
    CHECK(top.size() == 3);
    CHECK(top[1].first == "card charged");
    CHECK(bigram_report(make({}), 5).empty());
    CHECK_THROWS_AS(bigram_report(make({"a b"}), 0), ValidationError);

    SUBCASE("synthetic corpus against a nested-loop counter") {
        std::mt19937 rng(50);
        const std::vector<std::string> vocab = {"data", "privacy", "app", "sold", "my", "therapist", "notes", "ads"};
        std::vector<std::string> texts;
        for (int i = 0; i < 50; ++i) {
            std::string t;
            const int len = static_cast<int>(rng() % 9);
            for (int w = 0; w < len; ++w) t += (w ? " " : "") + vocab[rng() % vocab.size()];
            texts.push_back(t);
        }
        std::map<std::string, std::size_t> counts;
        for (const auto& t : texts) {
            std::vector<std::string> words;
            std::string cur;
            for (char c : t + " ") {
                if (c == ' ') {
                    if (!cur.empty()) words.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            for (std::size_t i = 0; i + 1 < words.size(); ++i) counts[words[i] + " " + words[i + 1]]++;
        }
        std::vector<BigramCount> expected(counts.begin(), counts.end());
        std::stable_sort(expected.begin(), expected.end(),
                         [](const auto& x, const auto& y) { return x.second > y.second; });
        const auto got = bigram_report(make(texts), 1000);
        CHECK(got == expected);
        const auto top5 = bigram_report(make(texts), 5);
        CHECK(std::vector<BigramCount>(expected.begin(), expected.begin() + 5) == top5);
    }
}

TEST_CASE("label files and prediction scoring") {
    const auto dir = fresh_dir("eval");
    write_file(dir / "gold.jsonl",
               "{\"review_id\":\"a\",\"label\":\"privacy\"}\n"
               "{\"review_id\":\"b\",\"label\":\"not-privacy\"}\n"
               "{\"review_id\":\"c\",\"label\":\"privacy\"}\n");
    write_file(dir / "pred.jsonl",
               "{\"review_id\":\"c\",\"label\":\"privacy\"}\n"
               "{\"review_id\":\"a\",\"label\":\"not-privacy\"}\n"
               "{\"review_id\":\"b\",\"label\":\"not-privacy\"}\n"
               "{\"review_id\":\"zz\",\"label\":\"privacy\"}\n");
    const auto gold = read_label_file(dir / "gold.jsonl");
    const auto pred = read_label_file(dir / "pred.jsonl");
    const auto r = evaluate_predictions(gold, pred);
    CHECK(r.scored == 3);
    CHECK(r.ignored_predictions == 1);
    CHECK(r.confusion.tp == 1);
    CHECK(r.confusion.fn == 1);
    CHECK(r.confusion.tn == 1);
    const auto j = to_json(r);
    CHECK(j.at("agreement").contains("kappa"));
    CHECK(j.at("metrics").contains("macro_f1"));
    const auto table = format_metrics_table({{"RunA", r}});
    CHECK(table.find("RunA") != std::string::npos);
    CHECK(table.find("kappa") != std::string::npos);

    write_file(dir / "short.jsonl", "{\"review_id\":\"a\",\"label\":\"privacy\"}\n");
    CHECK_THROWS_AS(evaluate_predictions(gold, read_label_file(dir / "short.jsonl")), ValidationError);
    write_file(dir / "bad.jsonl", "{\"review_id\":\"a\",\"label\":\"maybe\"}\n");
    CHECK_THROWS_AS(read_label_file(dir / "bad.jsonl"), ValidationError);
    write_file(dir / "dup.jsonl", "{\"review_id\":\"a\",\"label\":\"privacy\"}\n{\"review_id\":\"a\",\"label\":\"privacy\"}\n");
    CHECK_THROWS_AS(read_label_file(dir / "dup.jsonl"), ValidationError);

    write_label_file(dir / "out.jsonl", gold);
    const auto again = read_label_file(dir / "out.jsonl");
    REQUIRE(again.size() == 3);
    CHECK(again[2].review_id == "c");
    CHECK(again[2].label == Label::privacy);
}
