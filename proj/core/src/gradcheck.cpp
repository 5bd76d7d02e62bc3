#include "rana/trainer.hpp"

#include <cmath>

namespace rana {
namespace {

// Self-contained random instance: a small entity/relation pool with random
// neighborhoods, enough to exercise every kernel end to end.
struct CheckInstance {
    GradCheckSpec spec;
    EncoderParams enc;
    std::vector<Vec> entities;
    std::vector<Vec> relations;
    std::vector<std::vector<std::pair<int, int>>> nbrs;  // per entity: (rel idx, ent idx)
};

// The LeakyReLU in the pair projection is the one kink in the pipeline;
// central differences are invalid when a pre-activation sits within the FD
// step of it. Returns the smallest |W5 [x ⊕ y]| component over the points the
// check targets actually visit.
double min_kink_distance(const CheckInstance& inst) {
    auto pre_margin = [&](const Vec& x, const Vec& y) {
        Vec cat(2 * x.size());
        cat << x, y;
        return (inst.enc.W5 * cat).cwiseAbs().minCoeff();
    };
    auto neighbors_of = [&](int e) {
        std::vector<std::pair<Vec, Vec>> nbr;
        for (auto [r, c] : inst.nbrs[static_cast<std::size_t>(e)])
            nbr.emplace_back(inst.relations[static_cast<std::size_t>(r)],
                             inst.entities[static_cast<std::size_t>(c)]);
        return nbr;
    };
    double margin = pre_margin(inst.entities[0], inst.entities[1]);  // PairProjection target
    for (int i = 0; i < inst.spec.support_size; ++i) {
        const Vec& h = inst.entities[static_cast<std::size_t>(2 * i)];
        const Vec& t = inst.entities[static_cast<std::size_t>(2 * i + 1)];
        Vec r = t - h;
        Vec hp = encode_entity(h, r, neighbors_of(2 * i), inst.enc);
        Vec tp = encode_entity(t, r, neighbors_of(2 * i + 1), inst.enc);
        margin = std::min(margin, pre_margin(hp, tp));
    }
    return margin;
}

CheckInstance make_instance(const GradCheckSpec& spec) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        CheckInstance inst;
        inst.spec = spec;
        inst.enc = EncoderParams::init(spec.dim, spec.dim_a, 0.01,
                                       derive_seed(spec.seed, "gradcheck_encoder"));
        auto rng = attempt == 0
                       ? make_rng(spec.seed, "gradcheck_instance")
                       : make_rng(derive_seed(spec.seed, "gradcheck_instance", attempt),
                                  "gradcheck_instance");
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        int n_ent = 2 * spec.support_size + spec.J;
        int n_rel = 4;
        auto random_vec = [&] {
            Vec v(spec.dim);
            for (int i = 0; i < spec.dim; ++i) v(i) = dist(rng);
            return v;
        };
        for (int i = 0; i < n_ent; ++i) inst.entities.push_back(random_vec());
        for (int i = 0; i < n_rel; ++i) inst.relations.push_back(random_vec());
        std::uniform_int_distribution<int> pick_rel(0, n_rel - 1);
        std::uniform_int_distribution<int> pick_ent(0, n_ent - 1);
        inst.nbrs.resize(static_cast<std::size_t>(n_ent));
        for (auto& list : inst.nbrs)
            for (int i = 0; i < spec.neighbors; ++i) list.emplace_back(pick_rel(rng), pick_ent(rng));
        // Keep every visited pre-activation well clear of the kink relative
        // to the FD step; resample the instance otherwise.
        if (min_kink_distance(inst) > 100.0 * spec.fd_step || attempt > 64) return inst;
    }
}

struct AnalyticGrads {
    Mat W1, W2, W3, W4, W5;
    std::vector<Vec> entities, relations;
};

double forward(CheckTarget target, const CheckInstance& inst, AnalyticGrads* out) {
    const GradCheckSpec& spec = inst.spec;
    ad::Tape tape;
    auto encv = enc::EncoderVars::leaves(tape, inst.enc);
    std::vector<ad::Var> ents, rels;
    for (const auto& v : inst.entities) ents.push_back(tape.leaf(v));
    for (const auto& v : inst.relations) rels.push_back(tape.leaf(v));

    auto neighbors_of = [&](int e) {
        std::vector<std::pair<ad::Var, ad::Var>> nbr;
        for (auto [r, c] : inst.nbrs[static_cast<std::size_t>(e)])
            nbr.emplace_back(rels[static_cast<std::size_t>(r)], ents[static_cast<std::size_t>(c)]);
        return nbr;
    };
    auto scored_positive = [&](ad::Var h_prime, ad::Var t_prime, ad::Var relation,
                               const std::vector<ad::Var>& neg_enc) {
        ad::Var s =
            lossops::triple_score(lossops::triple_distance(h_prime, relation, t_prime), spec.gamma);
        std::vector<ad::Var> neg_scores;
        for (ad::Var n : neg_enc)
            neg_scores.push_back(
                lossops::triple_score(lossops::triple_distance(h_prime, relation, n), spec.gamma));
        ad::Var stacked = ad::stack_scalars(tape, neg_scores);
        ad::Var att = (spec.mode == LossMode::Attention || spec.mode == LossMode::NoPrune)
                          ? neg::negative_attention(tape, h_prime, t_prime, neg_enc)
                          : stacked;
        ad::Var w = lossops::negative_weights(tape, spec.mode, att, stacked);
        return std::tuple{s, stacked, w};
    };

    ad::Var loss = tape.constant(Mat::Zero(1, 1));
    switch (target) {
        case CheckTarget::RelevanceMlp:
            loss = enc::relevance_score(encv, rels[0], rels[1]);
            break;
        case CheckTarget::Encoder:
            loss = ad::sum(enc::encode_entity(tape, encv, ents[0], rels[0], neighbors_of(0)));
            break;
        case CheckTarget::PairProjection:
            loss = ad::sum(enc::pair_relation_rep(encv, ents[0], ents[1]));
            break;
        case CheckTarget::AttentionLoss: {
            std::vector<ad::Var> negs(ents.begin() + 2, ents.begin() + 2 + spec.J);
            auto [s, neg_scores, w] = scored_positive(ents[0], ents[1], rels[0], negs);
            loss = lossops::attention_loss(tape, {s}, {neg_scores}, {w});
            break;
        }
        case CheckTarget::FullPipeline: {
            std::vector<ad::Var> seeds, reps;
            std::vector<std::pair<ad::Var, ad::Var>> enc_pairs;
            for (int i = 0; i < spec.support_size; ++i) {
                ad::Var h = ents[static_cast<std::size_t>(2 * i)];
                ad::Var t = ents[static_cast<std::size_t>(2 * i + 1)];
                ad::Var r = enc::relation_seed(h, t);
                seeds.push_back(r);
                ad::Var hp = enc::encode_entity(tape, encv, h, r, neighbors_of(2 * i));
                ad::Var tp = enc::encode_entity(tape, encv, t, r, neighbors_of(2 * i + 1));
                enc_pairs.emplace_back(hp, tp);
                reps.push_back(enc::pair_relation_rep(encv, hp, tp));
            }
            ad::Var rel_support = ad::mean(tape, reps);
            std::vector<ad::Var> pos, negsc, ws;
            for (int i = 0; i < spec.support_size; ++i) {
                std::vector<ad::Var> neg_enc;
                for (int j = 0; j < spec.J; ++j) {
                    int id = 2 * spec.support_size + j;
                    neg_enc.push_back(
                        enc::encode_entity(tape, encv, ents[static_cast<std::size_t>(id)],
                                           seeds[static_cast<std::size_t>(i)], neighbors_of(id)));
                }
                auto [s, neg_scores, w] =
                    scored_positive(enc_pairs[static_cast<std::size_t>(i)].first,
                                    enc_pairs[static_cast<std::size_t>(i)].second, rel_support,
                                    neg_enc);
                pos.push_back(s);
                negsc.push_back(neg_scores);
                ws.push_back(w);
            }
            loss = lossops::attention_loss(tape, pos, negsc, ws);
            break;
        }
    }

    double value = loss.scalar();
    if (out) {
        tape.backward(loss);
        out->W1 = encv.W1.grad();
        out->W2 = encv.W2.grad();
        out->W3 = encv.W3.grad();
        out->W4 = encv.W4.grad();
        out->W5 = encv.W5.grad();
        for (ad::Var v : ents) out->entities.push_back(v.grad().col(0));
        for (ad::Var v : rels) out->relations.push_back(v.grad().col(0));
    }
    return value;
}

double rel_error(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
}

}  // namespace

GradCheckReport gradient_check(CheckTarget target, const GradCheckSpec& spec, double tolerance) {
    CheckInstance inst = make_instance(spec);
    AnalyticGrads grads;
    forward(target, inst, &grads);

    GradCheckReport report;
    report.tolerance = tolerance;
    const double h = spec.fd_step;

    auto fd_at = [&](double* entry) {
        double saved = *entry;
        *entry = saved + h;
        double plus = forward(target, inst, nullptr);
        *entry = saved - h;
        double minus = forward(target, inst, nullptr);
        *entry = saved;
        return (plus - minus) / (2 * h);
    };
    auto check_matrix = [&](const std::string& name, Mat& param, const Mat& analytic) {
        double worst = 0;
        for (Eigen::Index r = 0; r < param.rows(); ++r)
            for (Eigen::Index c = 0; c < param.cols(); ++c)
                worst = std::max(worst, rel_error(analytic(r, c), fd_at(&param(r, c))));
        report.groups.push_back({name, worst});
    };

    check_matrix("W1", inst.enc.W1, grads.W1);
    check_matrix("W2", inst.enc.W2, grads.W2);
    check_matrix("W3", inst.enc.W3, grads.W3);
    check_matrix("W4", inst.enc.W4, grads.W4);
    check_matrix("W5", inst.enc.W5, grads.W5);

    double worst_ent = 0, worst_rel = 0;
    for (std::size_t i = 0; i < inst.entities.size(); ++i)
        for (Eigen::Index d = 0; d < inst.entities[i].size(); ++d)
            worst_ent =
                std::max(worst_ent, rel_error(grads.entities[i](d), fd_at(&inst.entities[i](d))));
    for (std::size_t i = 0; i < inst.relations.size(); ++i)
        for (Eigen::Index d = 0; d < inst.relations[i].size(); ++d)
            worst_rel =
                std::max(worst_rel, rel_error(grads.relations[i](d), fd_at(&inst.relations[i](d))));
    report.groups.push_back({"entities", worst_ent});
    report.groups.push_back({"relations", worst_rel});

    for (const auto& g : report.groups) report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace rana
