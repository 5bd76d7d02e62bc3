#pragma once

#include "rana/kg.hpp"

namespace rana {

// Knobs for the synthetic benchmark generator. Entities carry a latent type;
// every background relation is a hub relation (all entities of one type point
// at one fixed entity of the next type), and each few-shot relation links
// many heads of one type to the hub of a sibling background relation over the
// same type pair. The task is learnable: pretraining separates hubs from
// non-hubs, and the support set identifies which hub the relation targets
// among same-type candidates.
struct SyntheticSpec {
    int entity_count = 200;
    int background_relations = 10;
    int train_tasks = 20;
    int valid_tasks = 3;
    int test_tasks = 5;
    int support_size = 5;  // I
    int query_count = 10;
    int candidate_count = 30;
    int latent_types = 5;
};

std::pair<KnowledgeGraph, TaskSet> generate_synthetic_kg(const SyntheticSpec& spec,
                                                         std::uint64_t seed);

}  // namespace rana
