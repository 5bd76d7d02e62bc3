#pragma once

#include "rana/kg.hpp"

#include <filesystem>

namespace rana {

// Dense entity and relation vectors. When built for a graph, the relation
// table holds 2x the graph's relation count so inverse-direction neighbor
// relations (see NeighborIndex) have trained vectors too.
struct EmbeddingTable {
    Mat entity_vecs;    // entity_count x dim
    Mat relation_vecs;  // relation_count x dim
    int dim = 0;

    int entity_count() const { return static_cast<int>(entity_vecs.rows()); }
    int relation_count() const { return static_cast<int>(relation_vecs.rows()); }
};

enum class Norm { L1, L2 };

struct TransEConfig {
    int dim = 16;
    double margin = 1.0;
    double learning_rate = 0.01;
    int epochs = 100;
    int batch_size = 64;
    std::uint64_t seed = 0;
    Norm norm = Norm::L2;
};

// Uniform init in [-6/sqrt(dim), +6/sqrt(dim)]; entity rows L2-normalized.
EmbeddingTable init_embeddings(int entity_count, int relation_count, int dim, std::uint64_t seed);

// Minimal TransE on the background triples (few-shot relations are excluded
// by construction of the background graph). Trains both directions: the
// inverse relation ids get the reverse triples. Throws TrainingError with the
// epoch index if the loss goes non-finite.
EmbeddingTable pretrain_transe(const KnowledgeGraph& graph, const TransEConfig& cfg);

// Margin-ranking loss averaged over background triples with seeded
// corruption; the pretrainer's progress measure.
double transe_mean_loss(const KnowledgeGraph& graph, const EmbeddingTable& table,
                        const TransEConfig& cfg, std::uint64_t corruption_seed);

// Binary format: magic "RANAEMB1", LE u32 entity_count/relation_count/dim,
// then row-major f32 matrices (entities, relations). Round-trip on the file
// bytes is the identity.
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

}  // namespace rana
