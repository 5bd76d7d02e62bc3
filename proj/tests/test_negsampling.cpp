#include <doctest.h>

#include "rana/embedding.hpp"
#include "rana/negsampling.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace rana;

namespace {

Mat rows_from(const std::vector<Vec>& rows) {
    Mat m(static_cast<Eigen::Index>(rows.size()), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    return m;
}

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_SUITE("negsampling") {

TEST_CASE("prune_candidates keeps exactly the >= tau candidates") {
    // t=[1,0]; a=[2,0] (sim 2), b=[-1,0] (sim -1), c=[0,1] (sim 0); tau=0.
    Mat ents = rows_from({v2(2, 0), v2(-1, 0), v2(0, 1)});
    auto kept = prune_candidates(v2(1, 0), {0, 1, 2}, ents, 0.0, 2);
    CHECK(kept == std::vector<int>{0, 2});  // boundary (sim 0) kept
}

TEST_CASE("tau = -inf keeps everything in order") {
    Mat ents = rows_from({v2(2, 0), v2(-1, 0), v2(0, 1)});
    auto kept = prune_candidates(v2(1, 0), {2, 0, 1}, ents,
                                 -std::numeric_limits<double>::infinity(), 2);
    CHECK(kept == std::vector<int>{2, 0, 1});
}

TEST_CASE("all-filtered falls back to the top-J by similarity") {
    Mat ents = rows_from({v2(2, 0), v2(-1, 0), v2(0, 1), v2(1, 1)});
    auto kept = prune_candidates(v2(1, 0), {0, 1, 2, 3}, ents, 100.0, 2);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == 0);  // sim 2
    CHECK(kept[1] == 3);  // sim 1
}

TEST_CASE("raising tau never grows the kept set (below the fallback regime)") {
    auto rng = make_rng(0, "prune_prop");
    std::normal_distribution<double> d(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 10;
        Mat ents(n, 3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 3; ++j) ents(i, j) = d(rng);
        Vec t(3);
        for (int j = 0; j < 3; ++j) t(j) = d(rng);
        std::vector<int> cands(n);
        for (int i = 0; i < n; ++i) cands[i] = i;

        std::vector<double> sims;
        for (int i = 0; i < n; ++i) sims.push_back(ents.row(i).dot(t));
        double lo = *std::min_element(sims.begin(), sims.end());
        double hi = *std::max_element(sims.begin(), sims.end());
        // Thresholds strictly inside the sim range keep the fallback inactive.
        std::size_t prev = prune_candidates(t, cands, ents, lo, 3).size();
        for (double tau : {lo + 0.25 * (hi - lo), lo + 0.5 * (hi - lo), hi}) {
            std::size_t now = prune_candidates(t, cands, ents, tau, 3).size();
            CHECK(now <= prev);
            prev = now;
        }
    }
}

TEST_CASE("adaptive_tau is the median similarity to the mean support tail") {
    // dim 1 entities: ids 0..5 with values 0,1,3,2,5,9.
    EmbeddingTable table;
    table.dim = 1;
    table.entity_vecs = Mat(6, 1);
    table.entity_vecs << 0, 1, 3, 2, 5, 9;
    table.relation_vecs = Mat::Zero(1, 1);
    // Support tails 1 and 2 (values 1 and 3) -> mean tail = 2.
    // Candidate sims to 2: {0, 4, 10, 18} -> upper median 10.
    double tau = adaptive_tau({{5, 1}, {5, 2}}, {0, 3, 4, 5}, table);
    CHECK(tau == doctest::Approx(10.0).epsilon(1e-12));
    CHECK_THROWS_AS(adaptive_tau({}, {0}, table), ContractError);
}

TEST_CASE("sample_negatives returns the whole pool when undersized") {
    auto rng = make_rng(0, "neg_small");
    std::vector<int> pool = {4, 8, 15};
    CHECK(sample_negatives(pool, 5, rng) == pool);
}

TEST_CASE("sample_negatives draws J distinct ids, deterministic per seed") {
    std::vector<int> pool(100);
    for (int i = 0; i < 100; ++i) pool[i] = i;

    auto rng1 = make_rng(9, "neg_det");
    auto s1 = sample_negatives(pool, 5, rng1);
    REQUIRE(s1.size() == 5);
    CHECK(std::set<int>(s1.begin(), s1.end()).size() == 5);
    for (int id : s1) {
        CHECK(id >= 0);
        CHECK(id < 100);
    }

    auto rng2 = make_rng(9, "neg_det");
    CHECK(sample_negatives(pool, 5, rng2) == s1);

    auto rng3 = make_rng(10, "neg_det");
    CHECK(sample_negatives(pool, 5, rng3) != s1);
}

TEST_CASE("negative_attention: singleton weight is 1") {
    auto beta = negative_attention(v2(0.3, -0.1), v2(1, 2), {v2(0, 0)});
    REQUIRE(beta.size() == 1);
    CHECK(beta[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("negative_attention: constructed f values (1, 0) give the softmax pair") {
    // dim 1: h=[0], t=[sqrt(2)]. p = [0, sqrt(2)], sqrt(|p|) = sqrt(2), so
    // f_j = t_neg_j exactly. Negatives 1 and 0 -> f = (1, 0).
    Vec h(1), t(1), n1(1), n2(1);
    h << 0;
    t << std::sqrt(2.0);
    n1 << 1;
    n2 << 0;
    auto beta = negative_attention(h, t, {n1, n2});
    double e = std::exp(1.0);
    CHECK(beta[0] == doctest::Approx(e / (e + 1)).epsilon(1e-9));
    CHECK(beta[1] == doctest::Approx(1.0 / (e + 1)).epsilon(1e-9));
}

TEST_CASE("negative_attention: normalization and order preservation") {
    auto rng = make_rng(1, "beta_prop");
    std::normal_distribution<double> d(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        int dim = 4, J = 5;
        auto rv = [&] {
            Vec v(dim);
            for (int i = 0; i < dim; ++i) v(i) = d(rng);
            return v;
        };
        Vec h = rv(), t = rv();
        std::vector<Vec> negs;
        for (int j = 0; j < J; ++j) negs.push_back(rv());
        auto beta = negative_attention(h, t, negs);

        double sum = 0;
        for (double b : beta) {
            CHECK(b > 0.0);
            sum += b;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);

        // f-order implies beta-order (softmax is strictly increasing).
        Vec p(2 * dim);
        p << h, t;
        double scale = 1.0 / std::sqrt(static_cast<double>(2 * dim));
        std::vector<double> f;
        for (const auto& n : negs) {
            Vec nv(2 * dim);
            nv << h, n;
            f.push_back(nv.dot(p) * scale);
        }
        for (int a = 0; a < J; ++a)
            for (int b = 0; b < J; ++b)
                if (f[a] > f[b]) CHECK(beta[a] > beta[b]);
    }
}

TEST_CASE("negative_attention is invariant to a common f shift") {
    // Shifting every negative tail by the same multiple of a fixed direction
    // adds an identical constant to every f, so beta must not change.
    auto rng = make_rng(2, "beta_shift");
    std::normal_distribution<double> d(0, 1);
    int dim = 3;
    auto rv = [&] {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v(i) = d(rng);
        return v;
    };
    Vec h = rv(), t = rv();
    std::vector<Vec> negs = {rv(), rv(), rv(), rv()};
    auto base = negative_attention(h, t, negs);

    Vec u = rv();
    std::vector<Vec> shifted;
    for (const auto& n : negs) shifted.push_back(n + 3.7 * u);
    auto moved = negative_attention(h, t, shifted);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(base[i] - moved[i]) < 1e-9);
}

TEST_CASE("on unit-norm candidate sets, f is maximized by the true tail itself") {
    // All tails unit norm: f = (|h|^2 + t_neg . t) / sqrt(|p|) is maximal when
    // t_neg = t by Cauchy-Schwarz.
    Vec h = v2(0.5, -0.25);
    Vec t = v2(1, 0);
    std::vector<Vec> negs = {t, v2(0, 1), v2(-1, 0), v2(std::sqrt(0.5), std::sqrt(0.5))};
    auto beta = negative_attention(h, t, negs);
    for (std::size_t i = 1; i < negs.size(); ++i) CHECK(beta[0] > beta[i]);
}

}  // TEST_SUITE
