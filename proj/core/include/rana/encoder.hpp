#pragma once

#include "rana/autodiff.hpp"
#include "rana/embedding.hpp"
#include "rana/kg.hpp"

#include <utility>
#include <vector>

namespace rana {

// Encoder weights. Matrices are stored (out x in): a weight named "M" below
// maps an input vector x to M * x.
struct EncoderParams {
    Mat W1;  // dim_a x 2dim   relevance MLP, hidden layer
    Mat W2;  // 1 x dim_a      relevance MLP, output layer
    Mat W3;  // dim x 2dim     neighbor feature projection
    Mat W4;  // dim x dim      entity output projection
    Mat W5;  // dim x 2dim     pair-to-relation projection
    double leaky_slope = 0.01;

    int dim() const { return static_cast<int>(W4.rows()); }
    int dim_a() const { return static_cast<int>(W1.rows()); }

    // Seeded uniform Xavier init. pair_gain scales the W5 init so the
    // pair-projection magnitude (hence ||R||) can be calibrated to the score
    // margin; with sigmoid-bounded encodings the raw Xavier scale leaves
    // every score deep in the loss's flat region when the margin is large.
    // encode_gain scales the W4 init: it widens the pre-sigmoid activations
    // so encoded entities start spread over the unit cube instead of
    // clustered around 0.5, which is what candidate discrimination rides on.
    static EncoderParams init(int dim, int dim_a, double leaky_slope, std::uint64_t seed,
                              double pair_gain = 1.0, double encode_gain = 1.0);
};

namespace enc {

// Tape-side parameter handles; one set of leaves per episode tape.
struct EncoderVars {
    ad::Var W1, W2, W3, W4, W5;
    double leaky_slope = 0.01;
    // Test-mode hooks. score_offset shifts every relevance score (softmax
    // shift-invariance checks); attend_with_entity is the reported-worse
    // variant that mixes the neighbor entity into the attention score.
    double score_offset = 0.0;
    bool attend_with_entity = false;

    static EncoderVars leaves(ad::Tape& tape, const EncoderParams& p);
};

// r = t - h over pretrained (current) entity vectors.
ad::Var relation_seed(ad::Var h_vec, ad::Var t_vec);

// m(r, r_i) = W2 tanh(W1 [r ⊕ r_i]); scalar, no bias terms.
ad::Var relevance_score(const EncoderVars& params, ad::Var r, ad::Var r_i);

// Softmax over per-neighbor relevance scores. Weights depend only on the
// neighbor relation vectors (unless attend_with_entity is set).
ad::Var neighbor_attention(ad::Tape& tape, const EncoderVars& params, ad::Var r,
                           const std::vector<std::pair<ad::Var, ad::Var>>& neighbors);

// h' = sigmoid(W4 (e + A)), A = Σ α_i W3 [r_i ⊕ c_i]; A = 0 when the entity
// has no neighbors.
ad::Var encode_entity(ad::Tape& tape, const EncoderVars& params, ad::Var e_vec, ad::Var r,
                      const std::vector<std::pair<ad::Var, ad::Var>>& neighbors);

// R_(h,t) = LeakyReLU(W5 [h' ⊕ t']).
ad::Var pair_relation_rep(const EncoderVars& params, ad::Var h_prime, ad::Var t_prime);

}  // namespace enc

// Value-level entry points (each runs a throwaway tape).

Vec relation_seed(const Vec& h_vec, const Vec& t_vec);
double relevance_score(const Vec& r, const Vec& r_i, const EncoderParams& params);
std::vector<double> neighbor_attention(const Vec& r, const std::vector<std::pair<Vec, Vec>>& neighbors,
                                       const EncoderParams& params);
Vec encode_entity(const Vec& e_vec, const Vec& r, const std::vector<std::pair<Vec, Vec>>& neighbors,
                  const EncoderParams& params);
Vec pair_relation_rep(const Vec& h_prime, const Vec& t_prime, const EncoderParams& params);

// R^s: mean over support pairs of the full Eq-chain representation, each pair
// encoded with its own seed r = t - h.
Vec support_relation_rep(const std::vector<std::pair<int, int>>& support,
                         const EmbeddingTable& table, const NeighborIndex& index,
                         const EncoderParams& params);

}  // namespace rana
