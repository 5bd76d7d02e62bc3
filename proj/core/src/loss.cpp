#include "rana/loss.hpp"

namespace rana {

LossMode parse_loss_mode(const std::string& name) {
    if (name == "attention") return LossMode::Attention;
    if (name == "single_negative") return LossMode::SingleNegative;
    if (name == "uniform_multi") return LossMode::UniformMulti;
    if (name == "no_prune") return LossMode::NoPrune;
    if (name == "self_adversarial") return LossMode::SelfAdversarial;
    throw ConfigError("unknown loss mode: " + name);
}

std::string loss_mode_name(LossMode mode) {
    switch (mode) {
        case LossMode::Attention: return "attention";
        case LossMode::SingleNegative: return "single_negative";
        case LossMode::UniformMulti: return "uniform_multi";
        case LossMode::NoPrune: return "no_prune";
        case LossMode::SelfAdversarial: return "self_adversarial";
    }
    throw ConfigError("unknown loss mode value");
}

namespace lossops {

ad::Var triple_distance(ad::Var h_prime, ad::Var relation, ad::Var t_prime) {
    return ad::l2norm(ad::sub(ad::add(h_prime, relation), t_prime));
}

ad::Var triple_score(ad::Var distance, double gamma) {
    return ad::add_const(ad::scale(distance, -1.0), gamma);
}

ad::Var attention_loss(ad::Tape& tape, const std::vector<ad::Var>& positive_scores,
                       const std::vector<ad::Var>& negative_scores,
                       const std::vector<ad::Var>& weights) {
    if (positive_scores.empty()) throw ContractError("attention_loss: no positives");
    if (negative_scores.size() != positive_scores.size() ||
        weights.size() != positive_scores.size())
        throw ContractError("attention_loss: per-positive lists must align");

    ad::Var total = tape.constant(Mat::Zero(1, 1));
    for (std::size_t i = 0; i < positive_scores.size(); ++i) {
        total = ad::add(total, ad::softplus_(ad::scale(positive_scores[i], -1.0)));
        total = ad::add(total, ad::dot(weights[i], ad::softplus_(negative_scores[i])));
    }
    return total;
}

ad::Var negative_weights(ad::Tape& tape, LossMode mode, ad::Var attention_weights,
                         ad::Var negative_scores) {
    switch (mode) {
        case LossMode::Attention:
        case LossMode::NoPrune:
            return attention_weights;
        case LossMode::SingleNegative:
        case LossMode::UniformMulti: {
            Eigen::Index j = negative_scores.value().rows();
            return tape.constant(Mat::Constant(j, 1, 1.0 / static_cast<double>(j)));
        }
        case LossMode::SelfAdversarial:
            // RotatE-style: weights from the negative score distribution,
            // treated as constants in the gradient.
            return ad::detach(ad::softmax_col(negative_scores));
    }
    throw ConfigError("unknown loss mode value");
}

}  // namespace lossops

double triple_distance(const Vec& h_prime, const Vec& relation, const Vec& t_prime) {
    return (h_prime + relation - t_prime).norm();
}

double triple_score(double distance, double gamma) { return gamma - distance; }

double attention_loss(const std::vector<double>& positive_scores,
                      const std::vector<std::vector<double>>& negative_scores,
                      const std::vector<std::vector<double>>& weights) {
    if (positive_scores.empty()) throw ContractError("attention_loss: no positives");
    double total = 0.0;
    for (std::size_t i = 0; i < positive_scores.size(); ++i) {
        total += ad::softplus_value(-positive_scores[i]);
        for (std::size_t j = 0; j < negative_scores[i].size(); ++j)
            total += weights[i][j] * ad::softplus_value(negative_scores[i][j]);
    }
    return total;
}

}  // namespace rana
