#include "rana/encoder.hpp"

#include <cmath>

namespace rana {
namespace {

Mat xavier_uniform(Eigen::Index out, Eigen::Index in, std::mt19937_64& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) m(r, c) = dist(rng);
    return m;
}

}  // namespace

EncoderParams EncoderParams::init(int dim, int dim_a, double leaky_slope, std::uint64_t seed,
                                  double pair_gain, double encode_gain) {
    if (dim < 1 || dim_a < 1) throw ContractError("EncoderParams: dim and dim_a must be >= 1");
    if (pair_gain <= 0 || encode_gain <= 0)
        throw ContractError("EncoderParams: pair_gain and encode_gain must be > 0");
    auto rng = make_rng(seed, "encoder_init");
    EncoderParams p;
    p.W1 = xavier_uniform(dim_a, 2 * dim, rng);
    p.W2 = xavier_uniform(1, dim_a, rng);
    p.W3 = xavier_uniform(dim, 2 * dim, rng);
    p.W4 = encode_gain * xavier_uniform(dim, dim, rng);
    p.W5 = pair_gain * xavier_uniform(dim, 2 * dim, rng);
    p.leaky_slope = leaky_slope;
    return p;
}

namespace enc {

EncoderVars EncoderVars::leaves(ad::Tape& tape, const EncoderParams& p) {
    EncoderVars v;
    v.W1 = tape.leaf(p.W1);
    v.W2 = tape.leaf(p.W2);
    v.W3 = tape.leaf(p.W3);
    v.W4 = tape.leaf(p.W4);
    v.W5 = tape.leaf(p.W5);
    v.leaky_slope = p.leaky_slope;
    return v;
}

ad::Var relation_seed(ad::Var h_vec, ad::Var t_vec) { return ad::sub(t_vec, h_vec); }

ad::Var relevance_score(const EncoderVars& params, ad::Var r, ad::Var r_i) {
    return ad::matmul(params.W2, ad::tanh_(ad::matmul(params.W1, ad::vcat(r, r_i))));
}

ad::Var neighbor_attention(ad::Tape& tape, const EncoderVars& params, ad::Var r,
                           const std::vector<std::pair<ad::Var, ad::Var>>& neighbors) {
    if (neighbors.empty()) throw ContractError("neighbor_attention: no neighbors");
    std::vector<ad::Var> scores;
    scores.reserve(neighbors.size());
    for (const auto& [r_i, c_i] : neighbors) {
        ad::Var s = relevance_score(params, r, r_i);
        if (params.attend_with_entity) s = ad::add(s, relevance_score(params, r, c_i));
        if (params.score_offset != 0.0) s = ad::add_const(s, params.score_offset);
        scores.push_back(s);
    }
    return ad::softmax_col(ad::stack_scalars(tape, scores));
}

ad::Var encode_entity(ad::Tape& tape, const EncoderVars& params, ad::Var e_vec, ad::Var r,
                      const std::vector<std::pair<ad::Var, ad::Var>>& neighbors) {
    ad::Var combined = e_vec;
    if (!neighbors.empty()) {
        ad::Var alpha = neighbor_attention(tape, params, r, neighbors);
        std::vector<ad::Var> features;
        features.reserve(neighbors.size());
        for (const auto& [r_i, c_i] : neighbors)
            features.push_back(ad::matmul(params.W3, ad::vcat(r_i, c_i)));
        ad::Var aggregated = ad::matmul(ad::hcat(tape, features), alpha);
        combined = ad::add(e_vec, aggregated);
    }
    return ad::sigmoid_(ad::matmul(params.W4, combined));
}

ad::Var pair_relation_rep(const EncoderVars& params, ad::Var h_prime, ad::Var t_prime) {
    return ad::leaky_relu(ad::matmul(params.W5, ad::vcat(h_prime, t_prime)), params.leaky_slope);
}

}  // namespace enc

namespace {

std::vector<std::pair<ad::Var, ad::Var>> neighbor_vars(
    ad::Tape& tape, const std::vector<std::pair<Vec, Vec>>& neighbors) {
    std::vector<std::pair<ad::Var, ad::Var>> out;
    out.reserve(neighbors.size());
    for (const auto& [r_i, c_i] : neighbors)
        out.emplace_back(tape.constant(r_i), tape.constant(c_i));
    return out;
}

}  // namespace

Vec relation_seed(const Vec& h_vec, const Vec& t_vec) { return t_vec - h_vec; }

double relevance_score(const Vec& r, const Vec& r_i, const EncoderParams& params) {
    ad::Tape tape;
    auto vars = enc::EncoderVars::leaves(tape, params);
    return enc::relevance_score(vars, tape.constant(r), tape.constant(r_i)).scalar();
}

std::vector<double> neighbor_attention(const Vec& r, const std::vector<std::pair<Vec, Vec>>& neighbors,
                                       const EncoderParams& params) {
    ad::Tape tape;
    auto vars = enc::EncoderVars::leaves(tape, params);
    ad::Var alpha = enc::neighbor_attention(tape, vars, tape.constant(r),
                                            neighbor_vars(tape, neighbors));
    const Mat& v = alpha.value();
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vec encode_entity(const Vec& e_vec, const Vec& r, const std::vector<std::pair<Vec, Vec>>& neighbors,
                  const EncoderParams& params) {
    ad::Tape tape;
    auto vars = enc::EncoderVars::leaves(tape, params);
    return enc::encode_entity(tape, vars, tape.constant(e_vec), tape.constant(r),
                              neighbor_vars(tape, neighbors))
        .value();
}

Vec pair_relation_rep(const Vec& h_prime, const Vec& t_prime, const EncoderParams& params) {
    ad::Tape tape;
    auto vars = enc::EncoderVars::leaves(tape, params);
    return enc::pair_relation_rep(vars, tape.constant(h_prime), tape.constant(t_prime)).value();
}

Vec support_relation_rep(const std::vector<std::pair<int, int>>& support,
                         const EmbeddingTable& table, const NeighborIndex& index,
                         const EncoderParams& params) {
    if (support.empty()) throw ContractError("support_relation_rep: empty support set");
    ad::Tape tape;
    auto vars = enc::EncoderVars::leaves(tape, params);

    auto neighbors_of = [&](int entity) {
        std::vector<std::pair<ad::Var, ad::Var>> out;
        for (auto [rel, nbr] : index.neighbors[static_cast<std::size_t>(entity)])
            out.emplace_back(tape.constant(table.relation_vecs.row(rel).transpose()),
                             tape.constant(table.entity_vecs.row(nbr).transpose()));
        return out;
    };

    std::vector<ad::Var> reps;
    for (auto [h, t] : support) {
        ad::Var h_vec = tape.constant(table.entity_vecs.row(h).transpose());
        ad::Var t_vec = tape.constant(table.entity_vecs.row(t).transpose());
        ad::Var r = enc::relation_seed(h_vec, t_vec);
        ad::Var h_prime = enc::encode_entity(tape, vars, h_vec, r, neighbors_of(h));
        ad::Var t_prime = enc::encode_entity(tape, vars, t_vec, r, neighbors_of(t));
        reps.push_back(enc::pair_relation_rep(vars, h_prime, t_prime));
    }
    return ad::mean(tape, reps).value();
}

}  // namespace rana
