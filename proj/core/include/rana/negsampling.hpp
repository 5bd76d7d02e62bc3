#pragma once

#include "rana/autodiff.hpp"
#include "rana/embedding.hpp"

#include <optional>
#include <random>
#include <vector>

namespace rana {

enum class SimilaritySpace { Pretrained, Encoded };

struct PruneConfig {
    // Fixed threshold; when unset, τ is per-task adaptive (median candidate
    // similarity to the mean support-tail vector).
    std::optional<double> tau;
    SimilaritySpace similarity_space = SimilaritySpace::Pretrained;
};

// Median dot-product similarity of the candidates to the mean of the support
// tails; the adaptive τ default.
double adaptive_tau(const std::vector<std::pair<int, int>>& support,
                    const std::vector<int>& candidates, const EmbeddingTable& table);

// Keeps candidates with dot(true_tail, candidate) >= tau, order preserved.
// The true tail must already be excluded. Falls back to the top-`fallback_j`
// by similarity when everything is filtered out.
std::vector<int> prune_candidates(const Vec& true_tail_vec, const std::vector<int>& candidates,
                                  const Mat& entity_vecs, double tau, int fallback_j);

// Up to J distinct ids, uniform without replacement; the whole pool when it
// has fewer than J entries.
std::vector<int> sample_negatives(const std::vector<int>& pruned, int J, std::mt19937_64& rng);

namespace neg {

// β over negatives: softmax of f(p, n_j) = n_jᵀp / sqrt(|p|), p = h ⊕ t,
// n_j = h ⊕ t⁻_j.
ad::Var negative_attention(ad::Tape& tape, ad::Var h_vec, ad::Var t_vec,
                           const std::vector<ad::Var>& negative_tails);

}  // namespace neg

std::vector<double> negative_attention(const Vec& h_vec, const Vec& t_vec,
                                       const std::vector<Vec>& negative_tails);

}  // namespace rana
