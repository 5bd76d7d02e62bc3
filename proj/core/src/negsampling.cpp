#include "rana/negsampling.hpp"

#include <algorithm>
#include <cmath>

namespace rana {

double adaptive_tau(const std::vector<std::pair<int, int>>& support,
                    const std::vector<int>& candidates, const EmbeddingTable& table) {
    if (support.empty() || candidates.empty())
        throw ContractError("adaptive_tau: empty support or candidate list");
    Vec mean_tail = Vec::Zero(table.dim);
    for (auto [h, t] : support) mean_tail += table.entity_vecs.row(t).transpose();
    mean_tail /= static_cast<double>(support.size());

    std::vector<double> sims;
    sims.reserve(candidates.size());
    for (int c : candidates) sims.push_back(table.entity_vecs.row(c).dot(mean_tail));
    std::size_t mid = sims.size() / 2;
    std::nth_element(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(mid), sims.end());
    return sims[mid];
}

std::vector<int> prune_candidates(const Vec& true_tail_vec, const std::vector<int>& candidates,
                                  const Mat& entity_vecs, double tau, int fallback_j) {
    if (candidates.empty()) throw ContractError("prune_candidates: empty candidate list");
    std::vector<int> kept;
    std::vector<std::pair<double, int>> scored;
    scored.reserve(candidates.size());
    for (int c : candidates) {
        double sim = entity_vecs.row(c).dot(true_tail_vec);
        scored.emplace_back(sim, c);
        if (sim >= tau) kept.push_back(c);  // boundary-inclusive: only strictly-below is pruned
    }
    if (!kept.empty()) return kept;

    // Everything filtered: keep the top-J most similar so training always
    // has negatives.
    int k = std::min<int>(std::max(fallback_j, 1), static_cast<int>(scored.size()));
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    kept.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) kept.push_back(scored[static_cast<std::size_t>(i)].second);
    return kept;
}

std::vector<int> sample_negatives(const std::vector<int>& pruned, int J, std::mt19937_64& rng) {
    if (pruned.empty()) throw ContractError("sample_negatives: empty pool");
    if (static_cast<int>(pruned.size()) <= J) return pruned;
    // Partial Fisher-Yates over a copy.
    std::vector<int> pool = pruned;
    for (int i = 0; i < J; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                        pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
    }
    pool.resize(static_cast<std::size_t>(J));
    return pool;
}

namespace neg {

ad::Var negative_attention(ad::Tape& tape, ad::Var h_vec, ad::Var t_vec,
                           const std::vector<ad::Var>& negative_tails) {
    if (negative_tails.empty()) throw ContractError("negative_attention: no negatives");
    ad::Var p = ad::vcat(h_vec, t_vec);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.value().rows()));
    std::vector<ad::Var> fs;
    fs.reserve(negative_tails.size());
    for (ad::Var neg_tail : negative_tails)
        fs.push_back(ad::scale(ad::dot(ad::vcat(h_vec, neg_tail), p), inv_sqrt));
    return ad::softmax_col(ad::stack_scalars(tape, fs));
}

}  // namespace neg

std::vector<double> negative_attention(const Vec& h_vec, const Vec& t_vec,
                                       const std::vector<Vec>& negative_tails) {
    ad::Tape tape;
    std::vector<ad::Var> negs;
    negs.reserve(negative_tails.size());
    for (const auto& n : negative_tails) negs.push_back(tape.constant(n));
    const Mat& beta =
        neg::negative_attention(tape, tape.constant(h_vec), tape.constant(t_vec), negs).value();
    return std::vector<double>(beta.data(), beta.data() + beta.size());
}

}  // namespace rana
