#include "doctest.h"

#include "qgen/error.hpp"
#include "qgen/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>

using namespace qgen;

namespace {

// normalizer with no stop words and no lemma exceptions, so schematic tokens
// like "a b c" survive verbatim and fixtures match hand arithmetic
const Normalizer &plain_norm() {
    static Normalizer n = [] {
        auto dir = std::filesystem::temp_directory_path();
        auto empty = dir / "qgen_empty.txt";
        std::ofstream(empty).close();
        return Normalizer::from_files(Lang::en, empty, empty);
    }();
    return n;
}

std::string random_sentence(std::mt19937_64 &rng, const std::vector<std::string> &pool,
                            std::size_t max_len) {
    std::string s;
    std::size_t n = 1 + rng() % max_len;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += pool[rng() % pool.size()];
    }
    return s;
}

} // namespace

TEST_CASE("unigram F1 fixtures") {
    CHECK(unigram_f1("a b c", "a b d", plain_norm()) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(unigram_f1("x", "x", plain_norm()) == doctest::Approx(1.0));
    CHECK(unigram_f1("x", "y", plain_norm()) == doctest::Approx(0.0));
    CHECK(unigram_f1("", "", plain_norm()) == doctest::Approx(1.0)); // both empty
    CHECK(unigram_f1("", "x", plain_norm()) == doctest::Approx(0.0));
    CHECK(unigram_f1("x", "", plain_norm()) == doctest::Approx(0.0));
    // multiset clipping: duplicated prediction token only matches once
    CHECK(unigram_f1("x x", "x y", plain_norm()) == doctest::Approx(0.5));
}

TEST_CASE("unigram F1 uses normalization with the english normalizer") {
    auto en = Normalizer::english();
    // "the" is a stop word and "oranges" lemmatizes to "orange"
    CHECK(unigram_f1("the oranges", "orange", en) == doctest::Approx(1.0));
}

TEST_CASE("sentence BLEU fixtures") {
    CHECK(bleu("a b c d", {"a b c e"}, 2) == doctest::Approx(100.0 * std::sqrt(0.5)).epsilon(1e-9));
    CHECK(bleu("a b c d", {"a b c e"}, 1) == doctest::Approx(75.0).epsilon(1e-9));
    CHECK(bleu("x y", {"p q"}, 1) == doctest::Approx(0.0)); // no unigram overlap
    CHECK(bleu("a b c", {"a b c"}, 2) == doctest::Approx(100.0));
}

TEST_CASE("BLEU brevity penalty and asymmetry") {
    // short prediction against a longer reference is penalized ...
    double short_pred = bleu("a b", {"a b c d"}, 1);
    CHECK(short_pred == doctest::Approx(100.0 * std::exp(1.0 - 2.0)).epsilon(1e-9));
    // ... but a long prediction against a short reference only loses precision
    double long_pred = bleu("a b c d", {"a b"}, 1);
    CHECK(long_pred == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(short_pred != long_pred);
}

TEST_CASE("multi-reference clipping uses per-ngram max over references") {
    // "the" appears at most twice in any single reference
    CHECK(bleu("the the the", {"the cat", "the the dog"}, 1) ==
          doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("closest reference length, shorter on ties") {
    // pred len 3; refs len 2 and 4 tie on |diff|, the shorter is chosen, BP = 1
    CHECK(bleu("a b c", {"a b", "a b c d"}, 1) == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("bigram smoothing only affects the bigram precision") {
    // one-token prediction has no bigrams: unsmoothed BLEU-2 is 0,
    // smoothed uses (0+1)/(0+1)
    CHECK(bleu("a", {"a"}, 2) == doctest::Approx(0.0));
    CHECK(bleu("a", {"a"}, 2, Lang::en, true) == doctest::Approx(100.0));
    CHECK(bleu("a", {"a"}, 1) == doctest::Approx(100.0)); // unigram path untouched
}

TEST_CASE("corpus accumulator matches sentence BLEU on a single segment") {
    BleuAccumulator acc;
    acc.add("a b c d", {"a b c e"});
    CHECK(acc.score(2) == doctest::Approx(bleu("a b c d", {"a b c e"}, 2)).epsilon(1e-12));
}

TEST_CASE("BLEU stays within [0,100] on random pairs and 100 on identity") {
    std::mt19937_64 rng(5);
    std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
    for (int i = 0; i < 300; ++i) {
        std::string p = random_sentence(rng, pool, 6);
        std::string r = random_sentence(rng, pool, 6);
        for (int n = 1; n <= 2; ++n) {
            double s = bleu(p, {r}, n);
            CHECK(s >= 0.0);
            CHECK(s <= 100.0 + 1e-9);
        }
        CHECK(bleu(p, {p}, 1) == doctest::Approx(100.0));
    }
}

TEST_CASE("ROUGE fixtures") {
    CHECK(rouge("a b c", "a c", RougeVariant::rL) == doctest::Approx(80.0).epsilon(1e-9));
    CHECK(rouge("a b c", "a b c", RougeVariant::r2) == doctest::Approx(100.0));
    CHECK(rouge("a b", "b a", RougeVariant::r2) == doctest::Approx(0.0)); // no shared bigram
    CHECK(rouge("a b", "b a", RougeVariant::r1) == doctest::Approx(100.0));
    CHECK(rouge("", "", RougeVariant::r1) == doctest::Approx(100.0));
    CHECK(rouge("", "a", RougeVariant::rL) == doctest::Approx(0.0));
}

TEST_CASE("ROUGE-L uses subsequences, not substrings") {
    // LCS("a x b y c", "a b c") = 3; P = 3/5, R = 1, F1 = 0.75
    CHECK(rouge("a x b y c", "a b c", RougeVariant::rL) == doctest::Approx(75.0).epsilon(1e-9));
}

TEST_CASE("evaluate_split two-group fixture, values frozen by hand") {
    std::vector<EvalGroup> groups(2);
    groups[0].context_id = "cxA";
    groups[0].references = {"the cat sat", "a cat sat down"};
    groups[1].context_id = "cxB";
    groups[1].references = {"dogs bark loudly"};
    std::map<std::string, std::string> preds = {{"cxA", "the cat sat"}, {"cxB", "dogs bark"}};

    auto b = evaluate_split(preds, groups, plain_norm());
    // group A: exact match -> F1 1; group B: P 1, R 2/3 -> F1 0.8; mean 0.9
    CHECK(b.uni_f1 == doctest::Approx(90.0).epsilon(1e-9));
    // corpus BLEU: matched 5/5 unigrams and 3/3 bigrams,
    // pred_len 5 vs closest ref_len 6 -> BP = exp(-0.2)
    double bp = std::exp(1.0 - 6.0 / 5.0);
    CHECK(b.bleu1 == doctest::Approx(100.0 * bp).epsilon(1e-9));
    CHECK(b.bleu2 == doctest::Approx(100.0 * bp).epsilon(1e-9));
    CHECK(b.sum == doctest::Approx(b.uni_f1 + b.bleu1 + b.bleu2).epsilon(1e-12));
    // rouge2 group B: overlap 1 of pred-bigrams 1 and ref-bigrams 2 -> 2/3
    CHECK(b.rouge1 == doctest::Approx(90.0).epsilon(1e-9));
    CHECK(b.rouge2 == doctest::Approx((100.0 + 200.0 / 3.0) / 2.0).epsilon(1e-9));
    CHECK(b.rougeL == doctest::Approx(90.0).epsilon(1e-9));
}

TEST_CASE("evaluate_split is invariant to group order") {
    std::vector<EvalGroup> groups(2);
    groups[0].context_id = "cxA";
    groups[0].references = {"the cat sat"};
    groups[1].context_id = "cxB";
    groups[1].references = {"dogs bark loudly"};
    std::map<std::string, std::string> preds = {{"cxA", "the cat"}, {"cxB", "dogs bark"}};
    auto fwd = evaluate_split(preds, groups, plain_norm());
    std::swap(groups[0], groups[1]);
    auto rev = evaluate_split(preds, groups, plain_norm());
    CHECK(fwd.sum == doctest::Approx(rev.sum).epsilon(1e-12));
    CHECK(fwd.rougeL == doctest::Approx(rev.rougeL).epsilon(1e-12));
}

TEST_CASE("evaluate_split reports missing predictions by context id") {
    std::vector<EvalGroup> groups(1);
    groups[0].context_id = "cxMISSING";
    groups[0].references = {"x"};
    std::map<std::string, std::string> preds;
    try {
        evaluate_split(preds, groups, plain_norm());
        FAIL("expected ValidationError");
    } catch (const ValidationError &e) {
        CHECK(std::string(e.what()).find("cxMISSING") != std::string::npos);
    }
}

TEST_CASE("perfect predictions score 100 on F1 and BLEU-1") {
    std::vector<EvalGroup> groups(2);
    groups[0].context_id = "g0";
    groups[0].references = {"alpha beta", "alpha beta gamma"};
    groups[1].context_id = "g1";
    groups[1].references = {"delta"};
    std::map<std::string, std::string> preds = {{"g0", "alpha beta"}, {"g1", "delta"}};
    auto b = evaluate_split(preds, groups, plain_norm());
    CHECK(b.uni_f1 == doctest::Approx(100.0));
    CHECK(b.bleu1 == doctest::Approx(100.0));
}

TEST_CASE("scoring functions") {
    auto f1 = make_scoring_function("uni_f1", plain_norm());
    CHECK(f1.score("same words", "same words") == doctest::Approx(1.0));
    CHECK(f1.score("a b c", "a b d") == doctest::Approx(2.0 / 3.0).epsilon(1e-9));

    auto b2 = make_scoring_function("bleu2", plain_norm());
    CHECK(b2.score("x y", "p q") == doctest::Approx(0.0));
    CHECK(b2.score("x y z", "x y z") == doctest::Approx(1.0));
    // smoothed sentence BLEU-2 on a single-token exact match
    CHECK(b2.score("x", "x") == doctest::Approx(1.0));

    CHECK_THROWS_AS(make_scoring_function("rouge", plain_norm()), ConfigError);
}

TEST_CASE("chinese scoring is character level") {
    CHECK(rouge("你好", "你好", RougeVariant::r2, Lang::zh) == doctest::Approx(100.0));
    CHECK(bleu("你好吗", {"你好呀"}, 1, Lang::zh) == doctest::Approx(200.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("bundle json round trip of field names") {
    ScoreBundle b;
    b.uni_f1 = 1;
    b.bleu1 = 2;
    b.bleu2 = 3;
    b.sum = 6;
    auto j = bundle_to_json(b);
    CHECK(j["uni_f1"] == 1.0);
    CHECK(j["sum"] == 6.0);
    CHECK(j.contains("rougeL"));
}
