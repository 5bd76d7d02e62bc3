#include "rana/synth.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_set>

namespace rana {
namespace {

struct GenerationError : ValidationError {
    using ValidationError::ValidationError;
};

// Entity i has type i % T; member k of type a is a + k*T.
int member(int type, int k, int latent_types) { return type + k * latent_types; }

int type_size(int type, int entity_count, int latent_types) {
    return (entity_count - type - 1) / latent_types + 1;
}

}  // namespace

std::pair<KnowledgeGraph, TaskSet> generate_synthetic_kg(const SyntheticSpec& spec,
                                                         std::uint64_t seed) {
    const int T = spec.latent_types;
    if (spec.entity_count < 1 || spec.background_relations < 1 || spec.train_tasks < 1 ||
        spec.valid_tasks < 1 || spec.test_tasks < 1 || spec.support_size < 1 ||
        spec.query_count < 1 || spec.candidate_count < 1 || T < 1)
        throw GenerationError("synthetic spec: all fields must be >= 1");
    if (T < 2) throw GenerationError("synthetic spec: at least 2 latent types are required");
    if (T > spec.entity_count)
        throw GenerationError("synthetic spec: more latent types than entities");

    const int fewshot_total = spec.train_tasks + spec.valid_tasks + spec.test_tasks;
    KnowledgeGraph graph;
    graph.entity_count = spec.entity_count;
    graph.relation_count = spec.background_relations + fewshot_total;

    graph.entity_names.reserve(spec.entity_count);
    for (int e = 0; e < spec.entity_count; ++e)
        graph.entity_names.push_back("e" + std::to_string(e) + "_t" + std::to_string(e % T));
    for (int j = 0; j < spec.background_relations; ++j)
        graph.relation_names.push_back("bg" + std::to_string(j));
    for (int i = 0; i < fewshot_total; ++i)
        graph.relation_names.push_back("fs" + std::to_string(i));

    // Background relation j is a hub relation: every entity of type a points
    // at one fixed hub entity of type b. TransE then clusters each type's
    // non-hub entities and places hubs at distinct relation offsets, which is
    // the structure the few-shot tasks ride on.
    auto hub_of = [&](int j) {
        int b = (j % T + 1) % T;
        return member(b, (j / T) % type_size(b, spec.entity_count, T), T);
    };
    for (int j = 0; j < spec.background_relations; ++j) {
        int a = j % T;
        int hub = hub_of(j);
        int cnt_a = type_size(a, spec.entity_count, T);
        for (int k = 0; k < cnt_a; ++k)
            graph.background_triples.push_back({member(a, k, T), j, hub});
    }

    // Each few-shot relation links many heads of one type to the hub of a
    // sibling background relation over the same type pair; the support set is
    // what identifies the hub among the same-type candidates.
    TaskSet tasks;
    for (int i = 0; i < fewshot_total; ++i) {
        int a = i % T;
        int b = (a + 1) % T;
        int cnt_a = type_size(a, spec.entity_count, T);
        int cnt_b = type_size(b, spec.entity_count, T);
        if (spec.support_size + spec.query_count > cnt_a)
            throw GenerationError("synthetic spec: support_size + query_count (" +
                                  std::to_string(spec.support_size + spec.query_count) +
                                  ") exceeds entities of the head type (" +
                                  std::to_string(cnt_a) + ")");
        if (spec.candidate_count > cnt_b)
            throw GenerationError("synthetic spec: candidate_count (" +
                                  std::to_string(spec.candidate_count) +
                                  ") exceeds entities of the tail type (" +
                                  std::to_string(cnt_b) + ")");

        auto rng = make_rng(seed, "synth_task", static_cast<std::uint64_t>(i));
        std::vector<int> heads(cnt_a);
        std::iota(heads.begin(), heads.end(), 0);
        std::shuffle(heads.begin(), heads.end(), rng);
        // Sibling background relations share this task's type pair.
        if (a >= spec.background_relations)
            throw GenerationError(
                "synthetic spec: background_relations must be >= latent_types so every few-shot "
                "relation has a sibling background relation");
        int siblings = (spec.background_relations - 1 - a) / T + 1;
        int hub = hub_of(a + T * ((i / T) % siblings));

        FewShotTask task;
        task.rel = spec.background_relations + i;
        for (int s = 0; s < spec.support_size; ++s)
            task.support.emplace_back(member(a, heads[s], T), hub);
        for (int q = 0; q < spec.query_count; ++q)
            task.queries.emplace_back(member(a, heads[spec.support_size + q], T), hub);

        // Candidates: the hub plus random other type-b entities.
        std::vector<int> others;
        for (int k = 0; k < cnt_b; ++k) {
            int e = member(b, k, T);
            if (e != hub) others.push_back(e);
        }
        std::shuffle(others.begin(), others.end(), rng);
        task.candidates.push_back(hub);
        for (int o : others) {
            if (static_cast<int>(task.candidates.size()) >= spec.candidate_count) break;
            task.candidates.push_back(o);
        }
        std::shuffle(task.candidates.begin(), task.candidates.end(), rng);

        if (i < spec.train_tasks)
            tasks.train.push_back(std::move(task));
        else if (i < spec.train_tasks + spec.valid_tasks)
            tasks.valid.push_back(std::move(task));
        else
            tasks.test.push_back(std::move(task));
    }

    validate_dataset(graph, tasks);
    return {std::move(graph), std::move(tasks)};
}

}  // namespace rana
