#pragma once

#include "rana/autodiff.hpp"

#include <string>
#include <vector>

namespace rana {

enum class LossMode {
    Attention,       // β from scaled-dot similarity to the positive (default)
    SingleNegative,  // J forced to 1, β = 1
    UniformMulti,    // β = 1/J
    NoPrune,         // attention weights, pruning bypassed upstream
    SelfAdversarial  // β = softmax over negative scores, stop-gradient weights
};

LossMode parse_loss_mode(const std::string& name);
std::string loss_mode_name(LossMode mode);

namespace lossops {

// d = ||h' + R - t'||_2.
ad::Var triple_distance(ad::Var h_prime, ad::Var relation, ad::Var t_prime);

// s = γ - d.
ad::Var triple_score(ad::Var distance, double gamma);

// L = Σ_i -log σ(s_i) + Σ_i Σ_j β_ij -log σ(-s⁻_ij), evaluated through the
// softplus identity -log σ(x) = softplus(-x). `negative_scores` and `weights`
// are column vectors per positive; weights each sum to 1.
ad::Var attention_loss(ad::Tape& tape, const std::vector<ad::Var>& positive_scores,
                       const std::vector<ad::Var>& negative_scores,
                       const std::vector<ad::Var>& weights);

// Mode-dependent weight vector for one positive's negatives. For
// SelfAdversarial the scores vector is softmaxed and detached.
ad::Var negative_weights(ad::Tape& tape, LossMode mode, ad::Var attention_weights,
                         ad::Var negative_scores);

}  // namespace lossops

double triple_distance(const Vec& h_prime, const Vec& relation, const Vec& t_prime);
double triple_score(double distance, double gamma);
double attention_loss(const std::vector<double>& positive_scores,
                      const std::vector<std::vector<double>>& negative_scores,
                      const std::vector<std::vector<double>>& weights);

}  // namespace rana
