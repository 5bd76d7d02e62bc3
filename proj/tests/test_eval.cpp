#include <doctest.h>

#include "rana/eval.hpp"
#include "rana/synth.hpp"

#include <cmath>
#include <random>

using namespace rana;

namespace {

ModelParams random_model(const KnowledgeGraph& g, int dim, std::uint64_t seed) {
    ModelParams p;
    p.embeddings = init_embeddings(g.entity_count, 2 * g.relation_count, dim, seed);
    p.encoder = EncoderParams::init(dim, dim, 0.01, derive_seed(seed, "enc"));
    return p;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("rank_from_scores: trivial and tie-rule cases") {
    // Single candidate (the true tail itself).
    CHECK(rank_from_scores(3.0, {3.0}) == 1);
    // Strictly highest among 10.
    std::vector<double> ten = {9, 1, 2, 3, 4, 5, 6, 7, 8, 0};
    CHECK(rank_from_scores(9.0, ten) == 1);
    // One equal-scoring rival, none strictly better: expected-rank tie rule
    // gives better + 1 + ties/2 = 0 + 1 + 1 = 2.
    CHECK(rank_from_scores(5.0, {5.0, 5.0, 1.0}) == 2);
    // Three-way tie at the top: 1 + 3/2 (half-up) = 2.
    CHECK(rank_from_scores(5.0, {5.0, 5.0, 5.0}) == 2);
    // True score missing from the candidate list is a contract violation.
    CHECK_THROWS_AS(rank_from_scores(9.0, {1.0, 2.0}), ContractError);
}

TEST_CASE("rank_from_scores is invariant to a constant score shift") {
    auto rng = make_rng(0, "rank_shift");
    std::normal_distribution<double> d(0, 2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> scores(12);
        for (double& s : scores) s = d(rng);
        double true_score = scores[3];
        int base = rank_from_scores(true_score, scores);
        double shift = d(rng);
        std::vector<double> moved = scores;
        for (double& s : moved) s += shift;
        CHECK(rank_from_scores(true_score + shift, moved) == base);
    }
}

TEST_CASE("compute_metrics: [1,2,4] and edge cases") {
    Metrics m = compute_metrics({1, 2, 4});
    CHECK(std::abs(m.mrr - 7.0 / 12.0) < 1e-12);  // 0.583333...
    CHECK(m.hits[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(m.hits[5] == 1.0);
    CHECK(m.hits[10] == 1.0);
    CHECK(m.n_queries == 3);

    Metrics ones = compute_metrics({1, 1, 1});
    CHECK(ones.mrr == 1.0);
    CHECK(ones.hits[1] == 1.0);

    Metrics deep = compute_metrics({11});
    CHECK(deep.hits[10] == 0.0);
    CHECK(deep.mrr == doctest::Approx(1.0 / 11.0).epsilon(1e-15));

    CHECK_THROWS_AS(compute_metrics({}), ContractError);
    CHECK_THROWS_AS(compute_metrics({0}), ContractError);
}

TEST_CASE("hits are monotone in K and mrr is bounded on random rank lists") {
    auto rng = make_rng(1, "hits_mono");
    std::uniform_int_distribution<int> rank(1, 40);
    std::uniform_int_distribution<int> len(1, 30);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> ranks(static_cast<std::size_t>(len(rng)));
        int max_rank = 1;
        for (int& r : ranks) {
            r = rank(rng);
            max_rank = std::max(max_rank, r);
        }
        Metrics m = compute_metrics(ranks);
        CHECK(m.hits[1] <= m.hits[5]);
        CHECK(m.hits[5] <= m.hits[10]);
        CHECK(m.mrr >= 1.0 / max_rank);
        CHECK(m.mrr <= 1.0);
        CHECK(m.mrr >= m.hits[1]);  // each rank-1 query contributes its full weight

        // Adding a rank-1 query never decreases the MRR.
        std::vector<int> plus = ranks;
        plus.push_back(1);
        CHECK(compute_metrics(plus).mrr >= m.mrr);
    }
}

TEST_CASE("micro-averaging is the contract (differs from per-task macro)") {
    // Task A ranks: [1]; task B ranks: [2,2,2,2].
    Metrics micro = compute_metrics({1, 2, 2, 2, 2});
    CHECK(micro.mrr == doctest::Approx(0.6).epsilon(1e-12));
    double macro = (compute_metrics({1}).mrr + compute_metrics({2, 2, 2, 2}).mrr) / 2.0;
    CHECK(macro == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(micro.mrr != macro);
}

TEST_CASE("parse_rank_mode accepts raw/filtered only") {
    CHECK(parse_rank_mode("raw") == RankMode::Raw);
    CHECK(parse_rank_mode("filtered") == RankMode::Filtered);
    CHECK_THROWS_AS(parse_rank_mode("open"), ConfigError);
}

TEST_CASE("meta_test: ranks are bounded by the candidate count for any model") {
    KnowledgeGraph g;
    g.entity_count = 8;
    g.relation_count = 2;
    g.background_triples = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}};
    TaskSet tasks;
    FewShotTask t;
    t.rel = 1;
    t.support = {{0, 7}, {1, 7}};
    t.queries = {{2, 7}, {3, 7}, {4, 7}};
    t.candidates = {6, 7};  // true tail plus one distractor
    tasks.test.push_back(t);

    ModelParams p = random_model(g, 8, 0);
    Metrics m = meta_test(tasks.test, tasks, g, p, RankMode::Raw, 0);
    CHECK(m.mrr >= 0.5);  // worst possible rank with 2 candidates is 2
    CHECK(m.mrr <= 1.0);
    CHECK(m.hits[5] == 1.0);
    CHECK(m.n_queries == 3);
}

TEST_CASE("meta_test is deterministic per seed and micro-averages across tasks") {
    SyntheticSpec spec;
    spec.entity_count = 100;
    spec.train_tasks = 2;
    spec.valid_tasks = 1;
    spec.test_tasks = 3;
    spec.support_size = 2;
    spec.query_count = 4;
    spec.candidate_count = 10;
    auto [g, tasks] = generate_synthetic_kg(spec, 5);
    ModelParams p = random_model(g, 8, 5);

    Metrics a = meta_test(tasks.test, tasks, g, p, RankMode::Filtered, 11);
    Metrics b = meta_test(tasks.test, tasks, g, p, RankMode::Filtered, 11);
    CHECK(a.mrr == b.mrr);
    CHECK(a.hits == b.hits);
    CHECK(a.n_queries == 3 * 4);  // micro: every query of every task counted
}

TEST_CASE("filtered ranking never scores below raw ranking") {
    // Two queries share a head, so each one's true tail is a known-true
    // candidate for the other; filtering removes it before ranking.
    KnowledgeGraph g;
    g.entity_count = 12;
    g.relation_count = 2;
    g.background_triples = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}};
    TaskSet tasks;
    FewShotTask t;
    t.rel = 1;
    t.support = {{0, 6}};
    t.queries = {{5, 7}, {5, 8}};
    t.candidates = {6, 7, 8, 9, 10, 11};
    tasks.test.push_back(t);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ModelParams p = random_model(g, 8, seed);
        Metrics raw = meta_test(tasks.test, tasks, g, p, RankMode::Raw, 3);
        Metrics filt = meta_test(tasks.test, tasks, g, p, RankMode::Filtered, 3);
        CHECK(filt.mrr >= raw.mrr);
    }
}

TEST_CASE("untrained random model ranks near the uniform expectation") {
    // Symmetric synthetic graph (every entity is some relation's hub) keeps
    // candidate neighborhoods exchangeable, so an untrained model's MRR over
    // 1000 30-candidate queries sits near H(30)/30 ~ 0.133.
    SyntheticSpec spec;
    spec.entity_count = 200;
    spec.background_relations = 200;
    spec.train_tasks = 1;
    spec.valid_tasks = 1;
    spec.test_tasks = 100;
    spec.support_size = 5;
    spec.query_count = 10;
    spec.candidate_count = 30;
    auto [g, tasks] = generate_synthetic_kg(spec, 3);
    ModelParams p = random_model(g, 16, 0);
    Metrics m = meta_test(tasks.test, tasks, g, p, RankMode::Raw, 7);
    CHECK(m.n_queries == 1000);
    CHECK(m.mrr == doctest::Approx(0.133).epsilon(0.38));  // 0.133 +/- 0.05
    CHECK(std::abs(m.mrr - 0.1332) < 0.05);
}

}  // TEST_SUITE
