#pragma once

#include "rana/encoder.hpp"
#include "rana/loss.hpp"
#include "rana/negsampling.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rana {

// The full trainable parameter set Θ plus its hyperparameters.
struct ModelParams {
    EmbeddingTable embeddings;  // relation table covers the doubled id space
    EncoderParams encoder;
    double gamma = 12.0;   // margin γ in s = γ - d
    double eta = 1.0;      // inner step size η
    double meta_lr = 0.01; // outer rate μ
    int J = 5;             // negatives per positive
    int neighbor_cap = 25;
    LossMode loss_mode = LossMode::Attention;
    bool train_embeddings = true;
    PruneConfig prune;

    void validate() const;
};

struct EpisodeResult {
    double support_loss = 0;
    double query_loss = 0;
    // Query loss re-evaluated with the unadapted R^s; the adaptation-benefit
    // measure.
    double query_loss_unadapted = 0;
    Vec adapted_relation;  // R^q
};

// A task with its per-pair pruned negative pools. Pruning is a one-time
// preparation step in the loaded (pretrained) embedding space; negatives are
// resampled from the pools every episode.
struct PreparedTask {
    FewShotTask task;
    std::vector<std::vector<int>> support_pools;
    std::vector<std::vector<int>> query_pools;
};

// `index` is required only for the encoded similarity space, where Eq-(8)
// similarities are taken between encoder outputs instead of raw embeddings.
PreparedTask prepare_task(const FewShotTask& task, const ModelParams& params,
                          const NeighborIndex* index = nullptr);

// Gradient accumulator covering Θ.
struct ThetaGrads {
    Mat entity, relation;
    Mat W1, W2, W3, W4, W5;

    static ThetaGrads zeros_like(const ModelParams& params);
    void scale(double c);
};

// R^q = R^s - η ∇L_s (exactly one step).
Vec adapt_relation(const Vec& relation_rep, const Vec& support_loss_grad, double eta);

// Plain gradient step on Θ (embeddings skipped when frozen).
void sgd_step(ModelParams& params, const ThetaGrads& grads, double lr);

// One meta-episode: R^s from the support set, support loss, the single inner
// step, query loss with R^q. Never mutates params; when `grads` is non-null
// the outer gradient of the query loss is accumulated into it.
EpisodeResult run_episode(const PreparedTask& prepared, const NeighborIndex& index,
                          const ModelParams& params, std::uint64_t episode_seed,
                          ThetaGrads* grads = nullptr);

struct Schedule {
    int iterations = 500;
    int eval_every = 50;       // validation cadence; best-MRR snapshot kept
    int tasks_per_batch = 1;
    std::string optimizer = "adam";  // adam | sgd
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TraceRow {
    int iter = 0;
    double support_loss = 0;
    double query_loss = 0;
    double query_loss_unadapted = 0;
    std::optional<double> val_mrr;
};

struct TrainResult {
    ModelParams params;  // best-on-validation snapshot
    std::vector<TraceRow> trace;
    double best_val_mrr = 0;
    int best_iter = 0;
};

// Algorithm-level meta-training loop: sample a task, run the episode, update
// Θ from the query loss. Returns the highest-validation-MRR snapshot.
TrainResult meta_train(const KnowledgeGraph& graph, const TaskSet& tasks, ModelParams params,
                       const Schedule& schedule, std::uint64_t seed);

void write_trace_jsonl(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

// Checkpoint: magic "RANACKPT1", the embedding payload, the encoder matrices
// (same f32 row-major discipline), then hyperparameters.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

// ---- differentiation-engine validation ----

enum class CheckTarget {
    RelevanceMlp,    // Eq-(2) MLP
    Encoder,         // neighbor attention + entity encoding
    PairProjection,  // pair-to-relation projection
    AttentionLoss,   // score/loss kernels on fixed encodings
    FullPipeline     // support-side chain end to end
};

struct GradCheckSpec {
    int dim = 8;
    int dim_a = 8;
    int neighbors = 3;
    int support_size = 2;
    int J = 4;
    std::uint64_t seed = 0;
    LossMode mode = LossMode::Attention;
    double fd_step = 1e-4;
    double gamma = 12.0;
};

struct GradCheckGroup {
    std::string name;
    double max_rel_error = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_error = 0;
    double tolerance = 0;
    bool passed = false;
};

// Central finite differences against the tape gradients for every parameter
// group of the selected target. Relative error uses a unit floor so
// near-zero gradients are compared absolutely.
GradCheckReport gradient_check(CheckTarget target, const GradCheckSpec& spec, double tolerance);

}  // namespace rana
