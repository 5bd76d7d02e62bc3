#pragma once

#include "rana/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rana {

struct Triple {
    int head = 0;
    int rel = 0;
    int tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
};

// The fact store. Background triples hold only high-frequency relations;
// few-shot relations live exclusively in the task splits.
struct KnowledgeGraph {
    int entity_count = 0;
    int relation_count = 0;
    std::vector<Triple> background_triples;
    std::vector<std::string> entity_names;    // optional, may be empty
    std::vector<std::string> relation_names;  // optional, may be empty
};

struct FewShotTask {
    int rel = 0;
    std::vector<std::pair<int, int>> support;  // (head, tail)
    std::vector<std::pair<int, int>> queries;  // (head, true tail)
    std::vector<int> candidates;               // candidate tails for this relation
};

struct TaskSet {
    std::vector<FewShotTask> train;
    std::vector<FewShotTask> valid;
    std::vector<FewShotTask> test;
};

// One-hop neighborhood of each entity, drawn from the background graph.
// Both edge directions are indexed: an incoming triple (c, r, e) is stored
// for e as (r + relation_count, c). The relation id space is therefore
// doubled wherever neighbor relation ids are consumed.
struct NeighborIndex {
    std::vector<std::vector<std::pair<int, int>>> neighbors;  // entity -> [(rel, entity)]
    int cap = 0;

    static int inverse_rel(int rel, int relation_count) { return rel + relation_count; }
};

// Loads the on-disk dataset directory (entities.tsv, relations.tsv,
// background.tsv, tasks_{train,valid,test}.json) and enforces all id-range,
// duplicate, and split-disjointness invariants.
std::pair<KnowledgeGraph, TaskSet> load_dataset(const std::filesystem::path& dir);

// Writes a dataset in the same directory format.
void save_dataset(const std::filesystem::path& dir, const KnowledgeGraph& graph,
                  const TaskSet& tasks);

// Builds the one-hop index. Entities with more than `cap` neighbors keep a
// seeded uniform subsample; pure function of (graph, cap, seed).
NeighborIndex build_neighbor_index(const KnowledgeGraph& graph, int cap, std::uint64_t seed);

// Validates all invariants of a (graph, tasks) pair; throws ValidationError
// listing the offending records.
void validate_dataset(const KnowledgeGraph& graph, const TaskSet& tasks);

}  // namespace rana
