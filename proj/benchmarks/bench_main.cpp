// Microbenchmarks for the hot paths: entity encoding, episode execution,
// candidate pruning + negative sampling, and query ranking.

#include <benchmark/benchmark.h>

#include "rana/eval.hpp"
#include "rana/synth.hpp"
#include "rana/trainer.hpp"

#include <random>

using namespace rana;

namespace {

struct Fixture {
    KnowledgeGraph graph;
    TaskSet tasks;
    EmbeddingTable table;
    EncoderParams encoder;
    NeighborIndex index;
    ModelParams params;

    explicit Fixture(int dim = 16) {
        SyntheticSpec spec;
        spec.entity_count = 200;
        spec.train_tasks = 20;
        spec.valid_tasks = 3;
        spec.test_tasks = 5;
        spec.support_size = 5;
        spec.candidate_count = 30;
        std::tie(graph, tasks) = generate_synthetic_kg(spec, 0);
        table = init_embeddings(graph.entity_count, 2 * graph.relation_count, dim, 0);
        encoder = EncoderParams::init(dim, dim, 0.01, 1, /*pair_gain=*/12.0);
        index = build_neighbor_index(graph, 25, 0);
        params.embeddings = table;
        params.encoder = encoder;
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

void BM_encode_entity(benchmark::State& state) {
    Fixture& f = fixture();
    int dim = f.table.dim;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0, 1);
    Vec r(dim), e = f.table.entity_vecs.row(0);
    for (int i = 0; i < dim; ++i) r(i) = d(rng);
    std::vector<std::pair<Vec, Vec>> neighbors;
    for (int i = 0; i < static_cast<int>(state.range(0)); ++i)
        neighbors.emplace_back(f.table.relation_vecs.row(i % f.table.relation_vecs.rows()),
                               f.table.entity_vecs.row(i % f.table.entity_vecs.rows()));
    for (auto _ : state) benchmark::DoNotOptimize(encode_entity(e, r, neighbors, f.encoder));
}
BENCHMARK(BM_encode_entity)->Arg(3)->Arg(10)->Arg(25);

void BM_support_relation_rep(benchmark::State& state) {
    Fixture& f = fixture();
    const auto& task = f.tasks.train.front();
    for (auto _ : state)
        benchmark::DoNotOptimize(
            support_relation_rep(task.support, f.table, f.index, f.encoder));
}
BENCHMARK(BM_support_relation_rep);

void BM_prune_and_sample(benchmark::State& state) {
    Fixture& f = fixture();
    const auto& task = f.tasks.train.front();
    auto rng = make_rng(0, "bench_neg");
    for (auto _ : state) {
        PreparedTask prepared = prepare_task(task, f.params, &f.index);
        for (const auto& pool : prepared.support_pools)
            benchmark::DoNotOptimize(sample_negatives(pool, f.params.J, rng));
    }
}
BENCHMARK(BM_prune_and_sample);

void BM_run_episode(benchmark::State& state) {
    Fixture& f = fixture();
    PreparedTask prepared = prepare_task(f.tasks.train.front(), f.params, &f.index);
    std::uint64_t seed = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(run_episode(prepared, f.index, f.params, seed++));
}
BENCHMARK(BM_run_episode);

void BM_run_episode_with_grads(benchmark::State& state) {
    Fixture& f = fixture();
    PreparedTask prepared = prepare_task(f.tasks.train.front(), f.params, &f.index);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        ThetaGrads grads = ThetaGrads::zeros_like(f.params);
        benchmark::DoNotOptimize(run_episode(prepared, f.index, f.params, seed++, &grads));
    }
}
BENCHMARK(BM_run_episode_with_grads);

void BM_meta_test_task(benchmark::State& state) {
    Fixture& f = fixture();
    std::vector<FewShotTask> one = {f.tasks.test.front()};
    for (auto _ : state)
        benchmark::DoNotOptimize(
            meta_test(one, f.tasks, f.graph, f.params, RankMode::Filtered, 0));
}
BENCHMARK(BM_meta_test_task);

}  // namespace

BENCHMARK_MAIN();
