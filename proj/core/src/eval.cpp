#include "rana/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <unordered_set>

namespace rana {
namespace {

std::int64_t key_of(int rel, int head) {
    return (static_cast<std::int64_t>(rel) << 32) | static_cast<std::uint32_t>(head);
}

int env_thread_count() {
    const char* env = std::getenv("RANA_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return std::max(1, n);
}

}  // namespace

RankMode parse_rank_mode(const std::string& name) {
    if (name == "raw") return RankMode::Raw;
    if (name == "filtered") return RankMode::Filtered;
    throw ConfigError("unknown rank mode: " + name);
}

int rank_from_scores(double true_score, const std::vector<double>& candidate_scores) {
    int better = 0, ties = 0;
    for (double s : candidate_scores) {
        if (s > true_score)
            ++better;
        else if (s == true_score)
            ++ties;
    }
    if (ties < 1) throw ContractError("rank_from_scores: true tail missing from candidates");
    // Expected rank over tied candidates, rounded half-up.
    return better + 1 + ties / 2;
}

Metrics compute_metrics(const std::vector<int>& ranks) {
    if (ranks.empty()) throw ContractError("compute_metrics: empty rank list");
    Metrics m;
    m.n_queries = static_cast<int>(ranks.size());
    for (int k : {1, 5, 10}) m.hits[k] = 0;
    for (int r : ranks) {
        if (r < 1) throw ContractError("compute_metrics: rank below 1");
        m.mrr += 1.0 / r;
        for (int k : {1, 5, 10})
            if (r <= k) m.hits[k] += 1;
    }
    m.mrr /= m.n_queries;
    for (int k : {1, 5, 10}) m.hits[k] /= m.n_queries;
    return m;
}

TrueTailIndex TrueTailIndex::build(const TaskSet& tasks) {
    TrueTailIndex index;
    auto add_split = [&](const std::vector<FewShotTask>& split) {
        for (const auto& t : split) {
            for (auto [h, tl] : t.support) index.map_[key_of(t.rel, h)].push_back(tl);
            for (auto [h, tl] : t.queries) index.map_[key_of(t.rel, h)].push_back(tl);
        }
    };
    add_split(tasks.train);
    add_split(tasks.valid);
    add_split(tasks.test);
    return index;
}

const std::vector<int>* TrueTailIndex::lookup(int rel, int head) const {
    auto it = map_.find(key_of(rel, head));
    return it == map_.end() ? nullptr : &it->second;
}

TaskContext::TaskContext(const FewShotTask& task, const ModelParams& params,
                         const NeighborIndex& index)
    : params_(params), index_(index) {
    if (task.support.empty()) throw ContractError("TaskContext: empty support set");
    r_mean_ = Vec::Zero(params.embeddings.dim);
    for (auto [h, t] : task.support)
        r_mean_ += relation_seed(params.embeddings.entity_vecs.row(h).transpose(),
                                 params.embeddings.entity_vecs.row(t).transpose());
    r_mean_ /= static_cast<double>(task.support.size());
}

const Vec& TaskContext::encoded(int entity) {
    auto it = cache_.find(entity);
    if (it != cache_.end()) return it->second;
    std::vector<std::pair<Vec, Vec>> nbrs;
    for (auto [rel, nbr] : index_.neighbors[static_cast<std::size_t>(entity)])
        nbrs.emplace_back(params_.embeddings.relation_vecs.row(rel).transpose(),
                          params_.embeddings.entity_vecs.row(nbr).transpose());
    Vec enc = encode_entity(params_.embeddings.entity_vecs.row(entity).transpose(), r_mean_, nbrs,
                            params_.encoder);
    return cache_.emplace(entity, std::move(enc)).first->second;
}

int rank_query(int head, int true_tail, const std::vector<int>& candidates, const Vec& R_q,
               TaskContext& ctx, RankMode mode, const TrueTailIndex* filter, int rel) {
    if (std::find(candidates.begin(), candidates.end(), true_tail) == candidates.end())
        throw ContractError("rank_query: true tail not in candidates");

    std::unordered_set<int> excluded;
    if (mode == RankMode::Filtered && filter) {
        if (const auto* known = filter->lookup(rel, head))
            for (int t : *known)
                if (t != true_tail) excluded.insert(t);
    }

    Vec translated = ctx.encoded(head) + R_q;
    double true_score = 0;
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (int c : candidates) {
        if (c != true_tail && excluded.count(c)) continue;
        double s = ctx.gamma() - (translated - ctx.encoded(c)).norm();
        scores.push_back(s);
        if (c == true_tail) true_score = s;
    }
    return rank_from_scores(true_score, scores);
}

Metrics meta_test(const std::vector<FewShotTask>& split, const TaskSet& all_tasks,
                  const KnowledgeGraph& graph, const ModelParams& params, RankMode mode,
                  std::uint64_t seed, const NeighborIndex* index) {
    NeighborIndex local_index;
    if (!index) {
        local_index =
            build_neighbor_index(graph, params.neighbor_cap, derive_seed(seed, "neighbor_index"));
        index = &local_index;
    }
    TrueTailIndex filter = TrueTailIndex::build(all_tasks);
    const int threads = env_thread_count();

    std::vector<int> ranks;
    for (const auto& task : split) {
        // Adapt R^s -> R^q exactly as in training, then rank with a frozen
        // context.
        PreparedTask prepared = prepare_task(task, params, index);
        EpisodeResult ep = run_episode(
            prepared, *index, params,
            derive_seed(seed, "eval_episode", static_cast<std::uint64_t>(task.rel)));
        TaskContext ctx(task, params, *index);
        // Warm the cache single-threaded; ranking then only reads it.
        for (int c : task.candidates) ctx.encoded(c);
        for (auto [h, t] : task.queries) ctx.encoded(h);

        std::vector<int> task_ranks(task.queries.size());
        auto rank_range = [&](std::size_t begin, std::size_t end) {
            for (std::size_t q = begin; q < end; ++q)
                task_ranks[q] =
                    rank_query(task.queries[q].first, task.queries[q].second, task.candidates,
                               ep.adapted_relation, ctx, mode, &filter, task.rel);
        };
        if (threads <= 1 || task.queries.size() < 2) {
            rank_range(0, task.queries.size());
        } else {
            std::vector<std::thread> pool;
            std::size_t n = task.queries.size();
            std::size_t per = (n + static_cast<std::size_t>(threads) - 1) /
                              static_cast<std::size_t>(threads);
            for (std::size_t b = 0; b < n; b += per)
                pool.emplace_back(rank_range, b, std::min(n, b + per));
            for (auto& th : pool) th.join();
        }
        ranks.insert(ranks.end(), task_ranks.begin(), task_ranks.end());
    }
    return compute_metrics(ranks);
}

}  // namespace rana
