#include <doctest.h>

#include <json.hpp>

#include "helpers.hpp"
#include "rana/eval.hpp"
#include "rana/synth.hpp"
#include "rana/trainer.hpp"

#include <cmath>
#include <fstream>

using namespace rana;
using testutil::TempDir;

namespace {

struct Fixture {
    KnowledgeGraph graph;
    TaskSet tasks;
    ModelParams params;
    NeighborIndex index;
};

Fixture make_fixture(std::uint64_t seed, int dim = 8) {
    SyntheticSpec spec;
    spec.entity_count = 100;
    spec.background_relations = 10;
    spec.train_tasks = 5;
    spec.valid_tasks = 1;
    spec.test_tasks = 1;
    spec.support_size = 3;
    spec.query_count = 4;
    spec.candidate_count = 10;
    Fixture f;
    std::tie(f.graph, f.tasks) = generate_synthetic_kg(spec, seed);
    f.params.embeddings =
        init_embeddings(f.graph.entity_count, 2 * f.graph.relation_count, dim, seed);
    f.params.encoder = EncoderParams::init(dim, dim, 0.01, derive_seed(seed, "enc"));
    f.index = build_neighbor_index(f.graph, f.params.neighbor_cap, seed);
    return f;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    return a.embeddings.entity_vecs == b.embeddings.entity_vecs &&
           a.embeddings.relation_vecs == b.embeddings.relation_vecs &&
           a.encoder.W1 == b.encoder.W1 && a.encoder.W2 == b.encoder.W2 &&
           a.encoder.W3 == b.encoder.W3 && a.encoder.W4 == b.encoder.W4 &&
           a.encoder.W5 == b.encoder.W5;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adapt_relation: hand-computed step, fixed point, quadratic oracle") {
    Vec R(2), g(2);
    R << 1, 1;
    g << 0.5, -0.5;
    Vec Rq = adapt_relation(R, g, 1.0);
    CHECK(Rq(0) == 0.5);
    CHECK(Rq(1) == 1.5);

    CHECK(adapt_relation(R, Vec::Zero(2), 1.0) == R);

    // L(R) = (R - 2)^2 at R = 0 with eta = 0.25: gradient -4, step to 1.
    ad::Tape tape;
    ad::Var Rv = tape.leaf(Mat::Zero(1, 1));
    ad::Var diff = ad::add_const(Rv, -2.0);
    ad::Var loss = ad::dot(diff, diff);
    tape.backward(loss);
    Vec Rq2 = adapt_relation(Rv.value().col(0), Rv.grad().col(0), 0.25);
    CHECK(Rq2(0) == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(adapt_relation(R, Vec::Zero(3), 1.0), ContractError);
    Vec bad(2);
    bad << std::nan(""), 0;
    CHECK_THROWS_AS(adapt_relation(R, bad, 1.0), TrainingError);
}

TEST_CASE("adapt_relation is linear in the gradient argument") {
    auto rng = make_rng(0, "adapt_lin");
    std::normal_distribution<double> d(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        Vec R(6), g1(6), g2(6);
        for (int i = 0; i < 6; ++i) {
            R(i) = d(rng);
            g1(i) = d(rng);
            g2(i) = d(rng);
        }
        double eta = 0.5;
        Vec lhs = adapt_relation(R, g1 + g2, eta);
        Vec rhs = adapt_relation(adapt_relation(R, g1, eta), g2, eta);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("run_episode is deterministic and never mutates parameters") {
    Fixture f = make_fixture(1);
    const FewShotTask& task = f.tasks.train[0];
    PreparedTask prepared = prepare_task(task, f.params, &f.index);

    ModelParams snapshot = f.params;
    ThetaGrads grads = ThetaGrads::zeros_like(f.params);
    EpisodeResult a = run_episode(prepared, f.index, f.params, 99, &grads);
    CHECK(params_equal(f.params, snapshot));  // snapshot isolation

    EpisodeResult b = run_episode(prepared, f.index, f.params, 99);
    CHECK(a.support_loss == b.support_loss);
    CHECK(a.query_loss == b.query_loss);
    CHECK(a.adapted_relation == b.adapted_relation);

    // Different seed: different negative draws, still a valid episode.
    EpisodeResult c = run_episode(prepared, f.index, f.params, 100);
    CHECK(std::isfinite(c.support_loss));
    CHECK(std::isfinite(c.query_loss));

    CHECK(a.support_loss >= 0.0);
    CHECK(a.query_loss >= 0.0);
    CHECK(a.adapted_relation.allFinite());
}

TEST_CASE("queries equal to support at a near-stationary point reproduce the support loss") {
    Fixture f = make_fixture(2);
    // Undersized pools (candidates - 1 < J) make negative draws deterministic;
    // a vanishing inner step keeps R^q = R^s to machine precision.
    f.params.eta = 1e-300;
    f.params.J = 10;
    FewShotTask task = f.tasks.train[0];
    task.support.resize(1);
    task.queries = task.support;
    task.candidates.resize(5);
    // Make sure the support tail is among the candidates.
    task.candidates[0] = task.support[0].second;
    PreparedTask prepared = prepare_task(task, f.params, &f.index);
    EpisodeResult ep = run_episode(prepared, f.index, f.params, 5);
    CHECK(ep.query_loss == doctest::Approx(ep.support_loss).epsilon(1e-12));
}

TEST_CASE("prepare_task pools exclude the true tail and respect no_prune") {
    Fixture f = make_fixture(3);
    const FewShotTask& task = f.tasks.train[1];

    PreparedTask pruned = prepare_task(task, f.params, &f.index);
    REQUIRE(pruned.support_pools.size() == task.support.size());
    for (std::size_t i = 0; i < task.support.size(); ++i) {
        CHECK(!pruned.support_pools[i].empty());
        for (int id : pruned.support_pools[i]) CHECK(id != task.support[i].second);
    }

    ModelParams np = f.params;
    np.loss_mode = LossMode::NoPrune;
    PreparedTask full = prepare_task(task, np, &f.index);
    for (std::size_t i = 0; i < task.support.size(); ++i) {
        CHECK(full.support_pools[i].size() == task.candidates.size() - 1);
        CHECK(pruned.support_pools[i].size() <= full.support_pools[i].size());
    }

    ModelParams enc_space = f.params;
    enc_space.prune.similarity_space = SimilaritySpace::Encoded;
    CHECK_THROWS_AS(prepare_task(task, enc_space, nullptr), ContractError);
    CHECK_NOTHROW(prepare_task(task, enc_space, &f.index));
}

TEST_CASE("sgd_step with zero learning rate leaves parameters unchanged") {
    Fixture f = make_fixture(4);
    ThetaGrads grads = ThetaGrads::zeros_like(f.params);
    grads.W1.setConstant(3.0);
    grads.entity.setConstant(-2.0);
    ModelParams before = f.params;
    sgd_step(f.params, grads, 0.0);
    CHECK(params_equal(f.params, before));
}

TEST_CASE("sgd_step skips embeddings when frozen") {
    Fixture f = make_fixture(5);
    f.params.train_embeddings = false;
    ThetaGrads grads = ThetaGrads::zeros_like(f.params);
    grads.entity.setConstant(1.0);
    grads.W4.setConstant(1.0);
    Mat ents = f.params.embeddings.entity_vecs;
    Mat w4 = f.params.encoder.W4;
    sgd_step(f.params, grads, 0.1);
    CHECK(f.params.embeddings.entity_vecs == ents);
    CHECK(f.params.encoder.W4 != w4);
}

TEST_CASE("meta_train with 0 iterations is a no-op with an empty trace") {
    Fixture f = make_fixture(6);
    Schedule sched;
    sched.iterations = 0;
    TrainResult r = meta_train(f.graph, f.tasks, f.params, sched, 0);
    CHECK(r.trace.empty());
    CHECK(params_equal(r.params, f.params));
}

TEST_CASE("meta_train is bitwise deterministic for a fixed seed") {
    Fixture f = make_fixture(7);
    Schedule sched;
    sched.iterations = 20;
    sched.eval_every = 10;
    TrainResult a = meta_train(f.graph, f.tasks, f.params, sched, 3);
    TrainResult b = meta_train(f.graph, f.tasks, f.params, sched, 3);
    CHECK(params_equal(a.params, b.params));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].support_loss == b.trace[i].support_loss);
        CHECK(a.trace[i].query_loss == b.trace[i].query_loss);
    }
}

TEST_CASE("meta_train drives the smoothed query loss down") {
    Fixture f = make_fixture(8);
    Schedule sched;
    sched.iterations = 200;
    sched.eval_every = 100;
    TrainResult r = meta_train(f.graph, f.tasks, f.params, sched, 1);
    REQUIRE(r.trace.size() == 200);
    auto mean_loss = [&](std::size_t begin, std::size_t end) {
        double s = 0;
        for (std::size_t i = begin; i < end; ++i) s += r.trace[i].query_loss;
        return s / static_cast<double>(end - begin);
    };
    CHECK(mean_loss(180, 200) < mean_loss(0, 20));
}

TEST_CASE("meta_train rejects bad configurations exhaustively typed") {
    Fixture f = make_fixture(9);
    Schedule sched;

    TaskSet empty = f.tasks;
    empty.train.clear();
    CHECK_THROWS_AS(meta_train(f.graph, empty, f.params, sched, 0), ConfigError);

    Schedule bad_opt = sched;
    bad_opt.optimizer = "adagrad";
    CHECK_THROWS_AS(meta_train(f.graph, f.tasks, f.params, bad_opt, 0), ConfigError);

    ModelParams bad = f.params;
    bad.gamma = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = f.params;
    bad.J = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = f.params;
    bad.embeddings = init_embeddings(10, 4, 8, 0);  // wrong id spaces
    CHECK_THROWS_AS(meta_train(f.graph, f.tasks, bad, sched, 0), ConfigError);
}

TEST_CASE("write_trace_jsonl emits one parseable object per row") {
    TempDir dir("trace");
    std::vector<TraceRow> trace = {{0, 1.5, 2.5, 2.6, std::nullopt}, {1, 1.0, 2.0, 2.2, 0.25}};
    auto path = dir / "trace.jsonl";
    write_trace_jsonl(trace, path);
    std::ifstream in(path);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        auto obj = nlohmann::json::parse(line);
        CHECK(obj.contains("iter"));
        CHECK(obj.contains("support_loss"));
        CHECK(obj.contains("query_loss"));
        if (rows == 1) CHECK(obj.at("val_mrr").get<double>() == doctest::Approx(0.25));
        ++rows;
    }
    CHECK(rows == 2);
}

TEST_CASE("checkpoint round-trip is bit-exact at the file level") {
    TempDir dir("ckpt");
    Fixture f = make_fixture(10);
    f.params.prune.tau = 0.75;
    f.params.loss_mode = LossMode::UniformMulti;
    auto p1 = dir / "a.ckpt";
    auto p2 = dir / "b.ckpt";
    save_checkpoint(f.params, p1);
    ModelParams loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(testutil::read_file(p1) == testutil::read_file(p2));
    CHECK(loaded.gamma == f.params.gamma);
    CHECK(loaded.eta == f.params.eta);
    CHECK(loaded.J == f.params.J);
    CHECK(loaded.loss_mode == LossMode::UniformMulti);
    REQUIRE(loaded.prune.tau.has_value());
    CHECK(*loaded.prune.tau == 0.75);
}

TEST_CASE("corrupted or truncated checkpoints are rejected") {
    TempDir dir("ckpt_bad");
    Fixture f = make_fixture(11);
    auto path = dir / "good.ckpt";
    save_checkpoint(f.params, path);

    std::string bytes = testutil::read_file(path);
    std::string magic_bad = bytes;
    magic_bad[3] = 'Z';
    testutil::write_file(dir / "magic.ckpt", magic_bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), FormatError);

    testutil::write_file(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 40));
    CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), FormatError);
}

TEST_CASE("gradient_check: linear loss 0.5*||Wx||^2 matches FD at machine level") {
    // Straight tape exercise independent of the built-in targets.
    auto rng = make_rng(0, "lin_fd");
    std::normal_distribution<double> d(0, 1);
    Mat W(3, 3);
    Vec x(3);
    for (int r = 0; r < 3; ++r) {
        x(r) = d(rng);
        for (int c = 0; c < 3; ++c) W(r, c) = d(rng);
    }
    auto loss_of = [&](const Mat& Wm) {
        ad::Tape tape;
        ad::Var Wv = tape.leaf(Wm);
        ad::Var xv = tape.constant(x);
        ad::Var y = ad::matmul(Wv, xv);
        return ad::scale(ad::dot(y, y), 0.5).scalar();
    };
    ad::Tape tape;
    ad::Var Wv = tape.leaf(W);
    ad::Var y = ad::matmul(Wv, tape.constant(x));
    ad::Var loss = ad::scale(ad::dot(y, y), 0.5);
    tape.backward(loss);
    Mat analytic = Wv.grad();

    double h = 1e-6;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            Mat Wp = W, Wm2 = W;
            Wp(r, c) += h;
            Wm2(r, c) -= h;
            double fd = (loss_of(Wp) - loss_of(Wm2)) / (2 * h);
            // Quadratic loss: central differences are exact up to rounding.
            CHECK(std::abs(analytic(r, c) - fd) < 1e-7);
        }
}

TEST_CASE("gradient_check passes for every target at 1e-4") {
    for (CheckTarget target : {CheckTarget::RelevanceMlp, CheckTarget::Encoder,
                               CheckTarget::PairProjection, CheckTarget::AttentionLoss,
                               CheckTarget::FullPipeline}) {
        for (std::uint64_t s = 0; s < 3; ++s) {
            GradCheckSpec spec;
            spec.seed = s;
            GradCheckReport rep = gradient_check(target, spec, 1e-4);
            CHECK(rep.passed);
            CHECK(rep.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("gradient_check covers every loss mode with differentiable weights") {
    for (LossMode mode : {LossMode::Attention, LossMode::UniformMulti, LossMode::SingleNegative}) {
        GradCheckSpec spec;
        spec.mode = mode;
        spec.seed = 13;
        CHECK(gradient_check(CheckTarget::AttentionLoss, spec, 1e-4).passed);
        CHECK(gradient_check(CheckTarget::FullPipeline, spec, 1e-4).passed);
    }
    // Self-adversarial weights are detached in the analytic gradient while
    // central differences see them move, so the FD comparison must disagree.
    GradCheckSpec sa;
    sa.mode = LossMode::SelfAdversarial;
    sa.seed = 13;
    CHECK_FALSE(gradient_check(CheckTarget::AttentionLoss, sa, 1e-6).passed);
}

TEST_CASE("gradient_check with tolerance 0 always fails but still reports") {
    GradCheckSpec spec;
    GradCheckReport rep = gradient_check(CheckTarget::RelevanceMlp, spec, 0.0);
    CHECK_FALSE(rep.passed);
    CHECK(!rep.groups.empty());
}

TEST_CASE("single_negative mode uses exactly one negative per positive") {
    Fixture f = make_fixture(12);
    f.params.loss_mode = LossMode::SingleNegative;
    const FewShotTask& task = f.tasks.train[0];
    PreparedTask prepared = prepare_task(task, f.params, &f.index);
    EpisodeResult ep = run_episode(prepared, f.index, f.params, 0);
    CHECK(std::isfinite(ep.support_loss));
    // Structural check happens inside run_episode (J forced to 1); here we
    // confirm the loss differs from the multi-negative mode on the same seed.
    ModelParams multi = f.params;
    multi.loss_mode = LossMode::Attention;
    EpisodeResult ep2 = run_episode(prepared, f.index, multi, 0);
    CHECK(ep.support_loss != ep2.support_loss);
}

}  // TEST_SUITE
