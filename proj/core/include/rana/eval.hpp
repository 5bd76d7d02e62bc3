#pragma once

#include "rana/trainer.hpp"

#include <map>
#include <unordered_map>
#include <vector>

namespace rana {

enum class RankMode { Raw, Filtered };

RankMode parse_rank_mode(const std::string& name);

struct Metrics {
    double mrr = 0;
    std::map<int, double> hits;  // K -> fraction, K in {1, 5, 10}
    int n_queries = 0;
};

// Expected-rank tie handling: rank = better + 1 + ties/2 (half-up), where
// `ties` counts candidates scoring exactly the true score, the true tail
// included.
int rank_from_scores(double true_score, const std::vector<double>& candidate_scores);

// mrr = mean 1/rank, hits@K = fraction with rank <= K.
Metrics compute_metrics(const std::vector<int>& ranks);

// (rel, head) -> known true tails across every split; the filtered-ranking
// exclusion set.
class TrueTailIndex {
  public:
    static TrueTailIndex build(const TaskSet& tasks);
    const std::vector<int>* lookup(int rel, int head) const;

  private:
    std::unordered_map<std::int64_t, std::vector<int>> map_;
};

// Frozen per-task scoring context: the mean support seed and a cache of
// entities encoded under it.
class TaskContext {
  public:
    TaskContext(const FewShotTask& task, const ModelParams& params, const NeighborIndex& index);

    const Vec& encoded(int entity);
    const Vec& mean_seed() const { return r_mean_; }
    double gamma() const { return params_.gamma; }

  private:
    const ModelParams& params_;
    const NeighborIndex& index_;
    Vec r_mean_;
    std::unordered_map<int, Vec> cache_;
};

// Scores every candidate tail with s = γ - ||h' + R_q - t'|| and ranks the
// true tail. Filtered mode removes other known-true tails for (head, rel).
int rank_query(int head, int true_tail, const std::vector<int>& candidates, const Vec& R_q,
               TaskContext& ctx, RankMode mode = RankMode::Filtered,
               const TrueTailIndex* filter = nullptr, int rel = -1);

// Meta-testing over one split: per task, R^s from the support set, one inner
// adaptation step, then every query ranked with R^q. Micro-averaged over all
// queries. Honors RANA_THREADS for query-level parallelism.
Metrics meta_test(const std::vector<FewShotTask>& split, const TaskSet& all_tasks,
                  const KnowledgeGraph& graph, const ModelParams& params, RankMode mode,
                  std::uint64_t seed, const NeighborIndex* index = nullptr);

}  // namespace rana
