#include "rana/trainer.hpp"

#include "rana/eval.hpp"

#include "binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace rana {
namespace {

// Lazily created embedding-row leaves; one Var per distinct id per tape.
struct LeafBank {
    ad::Tape& tape;
    const EmbeddingTable& table;
    std::unordered_map<int, ad::Var> entities;
    std::unordered_map<int, ad::Var> relations;

    ad::Var entity(int id) {
        auto it = entities.find(id);
        if (it != entities.end()) return it->second;
        ad::Var v = tape.leaf(table.entity_vecs.row(id).transpose());
        entities.emplace(id, v);
        return v;
    }
    ad::Var relation(int id) {
        auto it = relations.find(id);
        if (it != relations.end()) return it->second;
        ad::Var v = tape.leaf(table.relation_vecs.row(id).transpose());
        relations.emplace(id, v);
        return v;
    }
};

bool mode_uses_attention(LossMode mode) {
    return mode == LossMode::Attention || mode == LossMode::NoPrune;
}

std::vector<double> to_std(const Mat& col) {
    return std::vector<double>(col.data(), col.data() + col.size());
}

std::vector<double> softmax_values(const std::vector<double>& xs) {
    double m = *std::max_element(xs.begin(), xs.end());
    std::vector<double> e(xs.size());
    double sum = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        e[i] = std::exp(xs[i] - m);
        sum += e[i];
    }
    for (auto& v : e) v /= sum;
    return e;
}

}  // namespace

void ModelParams::validate() const {
    if (gamma <= 0) throw ConfigError("gamma must be > 0");
    if (eta <= 0) throw ConfigError("eta must be > 0");
    if (meta_lr <= 0) throw ConfigError("meta_lr must be > 0");
    if (J < 1) throw ConfigError("J must be >= 1");
    if (neighbor_cap < 1) throw ConfigError("neighbor_cap must be >= 1");
    if (embeddings.dim != encoder.dim())
        throw ConfigError("embedding dim (" + std::to_string(embeddings.dim) +
                          ") does not match encoder dim (" + std::to_string(encoder.dim()) + ")");
    if (!embeddings.entity_vecs.allFinite() || !embeddings.relation_vecs.allFinite())
        throw ConfigError("embeddings contain non-finite values");
}

PreparedTask prepare_task(const FewShotTask& task, const ModelParams& params,
                          const NeighborIndex* index) {
    PreparedTask prepared;
    prepared.task = task;

    const bool prune = params.loss_mode != LossMode::NoPrune;
    const bool encoded_space = params.prune.similarity_space == SimilaritySpace::Encoded;
    if (prune && encoded_space && !index)
        throw ContractError("prepare_task: encoded similarity space requires a neighbor index");

    // Similarity vectors for Eq-(8): raw table rows by default, encoder
    // outputs under the mean support seed in the encoded space.
    Mat sim_vecs = params.embeddings.entity_vecs;
    if (prune && encoded_space) {
        Vec mean_seed = Vec::Zero(params.embeddings.dim);
        for (auto [h, t] : task.support)
            mean_seed += relation_seed(params.embeddings.entity_vecs.row(h).transpose(),
                                       params.embeddings.entity_vecs.row(t).transpose());
        mean_seed /= static_cast<double>(task.support.size());
        auto encode_value = [&](int entity) {
            std::vector<std::pair<Vec, Vec>> nbrs;
            for (auto [rel, nbr] : index->neighbors[static_cast<std::size_t>(entity)])
                nbrs.emplace_back(params.embeddings.relation_vecs.row(rel).transpose(),
                                  params.embeddings.entity_vecs.row(nbr).transpose());
            return encode_entity(params.embeddings.entity_vecs.row(entity).transpose(), mean_seed,
                                 nbrs, params.encoder);
        };
        std::unordered_map<int, bool> wanted;
        for (int c : task.candidates) wanted[c] = true;
        for (auto [h, t] : task.support) wanted[t] = true;
        for (auto [h, t] : task.queries) wanted[t] = true;
        for (auto& [entity, _] : wanted) sim_vecs.row(entity) = encode_value(entity).transpose();
    }

    double tau = 0;
    if (prune) {
        EmbeddingTable sim_table{sim_vecs, params.embeddings.relation_vecs, params.embeddings.dim};
        tau = params.prune.tau ? *params.prune.tau
                               : adaptive_tau(task.support, task.candidates, sim_table);
    }

    auto pool_for = [&](int true_tail) {
        std::vector<int> negatives;
        for (int c : task.candidates)
            if (c != true_tail) negatives.push_back(c);
        if (negatives.empty())
            throw ValidationError("task rel=" + std::to_string(task.rel) +
                                  ": no negative candidates for tail " + std::to_string(true_tail));
        if (!prune) return negatives;
        return prune_candidates(sim_vecs.row(true_tail).transpose(), negatives, sim_vecs, tau,
                                params.J);
    };
    for (auto [h, t] : task.support) prepared.support_pools.push_back(pool_for(t));
    for (auto [h, t] : task.queries) prepared.query_pools.push_back(pool_for(t));
    return prepared;
}

ThetaGrads ThetaGrads::zeros_like(const ModelParams& p) {
    ThetaGrads g;
    g.entity = Mat::Zero(p.embeddings.entity_vecs.rows(), p.embeddings.entity_vecs.cols());
    g.relation = Mat::Zero(p.embeddings.relation_vecs.rows(), p.embeddings.relation_vecs.cols());
    g.W1 = Mat::Zero(p.encoder.W1.rows(), p.encoder.W1.cols());
    g.W2 = Mat::Zero(p.encoder.W2.rows(), p.encoder.W2.cols());
    g.W3 = Mat::Zero(p.encoder.W3.rows(), p.encoder.W3.cols());
    g.W4 = Mat::Zero(p.encoder.W4.rows(), p.encoder.W4.cols());
    g.W5 = Mat::Zero(p.encoder.W5.rows(), p.encoder.W5.cols());
    return g;
}

void ThetaGrads::scale(double c) {
    entity *= c;
    relation *= c;
    W1 *= c;
    W2 *= c;
    W3 *= c;
    W4 *= c;
    W5 *= c;
}

Vec adapt_relation(const Vec& relation_rep, const Vec& support_loss_grad, double eta) {
    if (relation_rep.size() != support_loss_grad.size())
        throw ContractError("adapt_relation: dim mismatch");
    if (!support_loss_grad.allFinite())
        throw TrainingError("adapt_relation: non-finite support gradient");
    return relation_rep - eta * support_loss_grad;
}

EpisodeResult run_episode(const PreparedTask& prepared, const NeighborIndex& index,
                          const ModelParams& params, std::uint64_t episode_seed,
                          ThetaGrads* grads) {
    const FewShotTask& task = prepared.task;
    if (task.support.empty()) throw ContractError("run_episode: empty support set");
    auto rng = make_rng(episode_seed, "episode_negatives");

    ad::Tape tape;
    auto encv = enc::EncoderVars::leaves(tape, params.encoder);
    LeafBank bank{tape, params.embeddings, {}, {}};
    const int j_eff = params.loss_mode == LossMode::SingleNegative ? 1 : params.J;

    auto neighbors_of = [&](int entity) {
        std::vector<std::pair<ad::Var, ad::Var>> out;
        for (auto [rel, nbr] : index.neighbors[static_cast<std::size_t>(entity)])
            out.emplace_back(bank.relation(rel), bank.entity(nbr));
        return out;
    };
    auto encode = [&](int entity, ad::Var r) {
        return enc::encode_entity(tape, encv, bank.entity(entity), r, neighbors_of(entity));
    };

    // Support side: per-pair seeds, encodings, relation representations.
    std::vector<ad::Var> seeds, reps;
    std::vector<std::pair<ad::Var, ad::Var>> support_enc;
    for (auto [h, t] : task.support) {
        ad::Var r = enc::relation_seed(bank.entity(h), bank.entity(t));
        seeds.push_back(r);
        ad::Var h_prime = encode(h, r);
        ad::Var t_prime = encode(t, r);
        support_enc.emplace_back(h_prime, t_prime);
        reps.push_back(enc::pair_relation_rep(encv, h_prime, t_prime));
    }
    ad::Var rel_support = ad::mean(tape, reps);  // R^s

    // Per-positive loss pieces plus the values needed to re-evaluate the
    // query loss with the unadapted relation.
    struct Positive {
        ad::Var score;
        ad::Var neg_scores;
        ad::Var weights;
        Vec h_val, t_val;
        std::vector<Vec> neg_vals;
    };
    auto build_positive = [&](ad::Var h_prime, ad::Var t_prime, ad::Var r_ctx, ad::Var relation,
                              const std::vector<int>& pool) {
        Positive p;
        std::vector<int> neg_ids = sample_negatives(pool, j_eff, rng);
        std::vector<ad::Var> neg_enc;
        neg_enc.reserve(neg_ids.size());
        for (int id : neg_ids) neg_enc.push_back(encode(id, r_ctx));

        p.score = lossops::triple_score(lossops::triple_distance(h_prime, relation, t_prime),
                                        params.gamma);
        std::vector<ad::Var> neg_score_list;
        neg_score_list.reserve(neg_enc.size());
        for (ad::Var n : neg_enc)
            neg_score_list.push_back(
                lossops::triple_score(lossops::triple_distance(h_prime, relation, n), params.gamma));
        p.neg_scores = ad::stack_scalars(tape, neg_score_list);

        ad::Var att = mode_uses_attention(params.loss_mode)
                          ? neg::negative_attention(tape, h_prime, t_prime, neg_enc)
                          : p.neg_scores;  // placeholder, unused by other modes
        p.weights = lossops::negative_weights(tape, params.loss_mode, att, p.neg_scores);

        p.h_val = h_prime.value();
        p.t_val = t_prime.value();
        for (ad::Var n : neg_enc) p.neg_vals.push_back(n.value());
        return p;
    };

    std::vector<ad::Var> sup_scores, sup_neg_scores, sup_weights;
    for (std::size_t i = 0; i < task.support.size(); ++i) {
        Positive p = build_positive(support_enc[i].first, support_enc[i].second, seeds[i],
                                    rel_support, prepared.support_pools[i]);
        sup_scores.push_back(p.score);
        sup_neg_scores.push_back(p.neg_scores);
        sup_weights.push_back(p.weights);
    }
    ad::Var support_loss = lossops::attention_loss(tape, sup_scores, sup_neg_scores, sup_weights);

    // Inner step: gradient of the support loss w.r.t. R^s only, first-order.
    tape.backward(support_loss);
    Vec support_grad = rel_support.grad().col(0);
    tape.zero_grad();
    Vec rel_query_val = adapt_relation(rel_support.value().col(0), support_grad, params.eta);
    ad::Var rel_query =
        ad::sub(rel_support, tape.constant(Mat(params.eta * support_grad)));  // R^q

    // Query side, encoded under the mean support seed.
    ad::Var mean_seed = ad::mean(tape, seeds);
    std::vector<ad::Var> qry_scores, qry_neg_scores, qry_weights;
    std::vector<Positive> qry_detail;
    for (std::size_t i = 0; i < task.queries.size(); ++i) {
        auto [h, t] = task.queries[i];
        ad::Var h_prime = encode(h, mean_seed);
        ad::Var t_prime = encode(t, mean_seed);
        Positive p =
            build_positive(h_prime, t_prime, mean_seed, rel_query, prepared.query_pools[i]);
        qry_scores.push_back(p.score);
        qry_neg_scores.push_back(p.neg_scores);
        qry_weights.push_back(p.weights);
        qry_detail.push_back(std::move(p));
    }
    // A stationary degenerate task may have no queries during testing; the
    // training loop always has them.
    EpisodeResult result;
    result.support_loss = support_loss.scalar();
    result.adapted_relation = rel_query_val;

    if (!task.queries.empty()) {
        ad::Var query_loss =
            lossops::attention_loss(tape, qry_scores, qry_neg_scores, qry_weights);
        result.query_loss = query_loss.scalar();

        // Same batch re-scored with the unadapted R^s (values only).
        const Vec rel_support_val = rel_support.value().col(0);
        std::vector<double> pos_u;
        std::vector<std::vector<double>> neg_u, w_u;
        for (const auto& p : qry_detail) {
            pos_u.push_back(
                triple_score(triple_distance(p.h_val, rel_support_val, p.t_val), params.gamma));
            std::vector<double> row;
            for (const auto& nv : p.neg_vals)
                row.push_back(
                    triple_score(triple_distance(p.h_val, rel_support_val, nv), params.gamma));
            w_u.push_back(params.loss_mode == LossMode::SelfAdversarial
                              ? softmax_values(row)
                              : to_std(p.weights.value()));
            neg_u.push_back(std::move(row));
        }
        result.query_loss_unadapted = attention_loss(pos_u, neg_u, w_u);

        if (grads) {
            tape.backward(query_loss);
            grads->W1 += encv.W1.grad();
            grads->W2 += encv.W2.grad();
            grads->W3 += encv.W3.grad();
            grads->W4 += encv.W4.grad();
            grads->W5 += encv.W5.grad();
            for (auto& [id, var] : bank.entities)
                grads->entity.row(id) += var.grad().col(0).transpose();
            for (auto& [id, var] : bank.relations)
                grads->relation.row(id) += var.grad().col(0).transpose();
        }
    }

    if (!std::isfinite(result.support_loss) || !std::isfinite(result.query_loss))
        throw TrainingError("run_episode: non-finite loss for task rel=" +
                            std::to_string(task.rel));
    return result;
}

namespace {

struct AdamState {
    ThetaGrads m, v;
    int t = 0;
};

void adam_update(Mat& param, const Mat& grad, Mat& m, Mat& v, const Schedule& s, double lr,
                 int t) {
    m = s.adam_beta1 * m + (1 - s.adam_beta1) * grad;
    v = s.adam_beta2 * v + (1 - s.adam_beta2) * grad.cwiseProduct(grad);
    double bc1 = 1 - std::pow(s.adam_beta1, t);
    double bc2 = 1 - std::pow(s.adam_beta2, t);
    param.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.adam_eps);
}

}  // namespace

void sgd_step(ModelParams& params, const ThetaGrads& grads, double lr) {
    params.encoder.W1 -= lr * grads.W1;
    params.encoder.W2 -= lr * grads.W2;
    params.encoder.W3 -= lr * grads.W3;
    params.encoder.W4 -= lr * grads.W4;
    params.encoder.W5 -= lr * grads.W5;
    if (params.train_embeddings) {
        params.embeddings.entity_vecs -= lr * grads.entity;
        params.embeddings.relation_vecs -= lr * grads.relation;
    }
}

TrainResult meta_train(const KnowledgeGraph& graph, const TaskSet& tasks, ModelParams params,
                       const Schedule& schedule, std::uint64_t seed) {
    params.validate();
    if (tasks.train.empty()) throw ConfigError("meta_train: empty train split");
    if (schedule.iterations < 0 || schedule.tasks_per_batch < 1 || schedule.eval_every < 1)
        throw ConfigError("meta_train: bad schedule");
    if (params.embeddings.entity_count() != graph.entity_count ||
        params.embeddings.relation_count() != 2 * graph.relation_count)
        throw ConfigError("meta_train: embedding table does not match the graph id spaces");
    if (schedule.optimizer != "adam" && schedule.optimizer != "sgd")
        throw ConfigError("meta_train: unknown optimizer " + schedule.optimizer);

    TrainResult result;
    result.params = params;
    if (schedule.iterations == 0) return result;

    NeighborIndex index =
        build_neighbor_index(graph, params.neighbor_cap, derive_seed(seed, "neighbor_index"));
    std::vector<PreparedTask> prepared;
    prepared.reserve(tasks.train.size());
    for (const auto& t : tasks.train) prepared.push_back(prepare_task(t, params, &index));

    auto task_rng = make_rng(seed, "task_sampling");
    std::uniform_int_distribution<std::size_t> pick_task(0, prepared.size() - 1);

    AdamState adam{ThetaGrads::zeros_like(params), ThetaGrads::zeros_like(params), 0};
    double best_mrr = -1;
    bool evaluated = false;

    auto evaluate = [&](int iter) {
        Metrics m = meta_test(tasks.valid, tasks, graph, params, RankMode::Filtered,
                              derive_seed(seed, "validation", static_cast<std::uint64_t>(iter)),
                              &index);
        evaluated = true;
        if (m.mrr > best_mrr) {
            best_mrr = m.mrr;
            result.params = params;
            result.best_val_mrr = m.mrr;
            result.best_iter = iter;
        }
        return m.mrr;
    };

    for (int iter = 0; iter < schedule.iterations; ++iter) {
        ThetaGrads grads = ThetaGrads::zeros_like(params);
        double sup = 0, qry = 0, qry_unadapted = 0;
        for (int b = 0; b < schedule.tasks_per_batch; ++b) {
            const PreparedTask& task = prepared[pick_task(task_rng)];
            EpisodeResult ep = run_episode(
                task, index, params,
                derive_seed(seed, "episode", static_cast<std::uint64_t>(task.task.rel),
                            static_cast<std::uint64_t>(iter)),
                &grads);
            sup += ep.support_loss;
            qry += ep.query_loss;
            qry_unadapted += ep.query_loss_unadapted;
        }
        double inv_batch = 1.0 / schedule.tasks_per_batch;
        grads.scale(inv_batch);
        sup *= inv_batch;
        qry *= inv_batch;
        qry_unadapted *= inv_batch;
        if (!std::isfinite(sup) || !std::isfinite(qry))
            throw TrainingError("meta_train: non-finite loss at iteration " + std::to_string(iter));

        if (schedule.optimizer == "sgd") {
            sgd_step(params, grads, params.meta_lr);
        } else {
            ++adam.t;
            adam_update(params.encoder.W1, grads.W1, adam.m.W1, adam.v.W1, schedule,
                        params.meta_lr, adam.t);
            adam_update(params.encoder.W2, grads.W2, adam.m.W2, adam.v.W2, schedule,
                        params.meta_lr, adam.t);
            adam_update(params.encoder.W3, grads.W3, adam.m.W3, adam.v.W3, schedule,
                        params.meta_lr, adam.t);
            adam_update(params.encoder.W4, grads.W4, adam.m.W4, adam.v.W4, schedule,
                        params.meta_lr, adam.t);
            adam_update(params.encoder.W5, grads.W5, adam.m.W5, adam.v.W5, schedule,
                        params.meta_lr, adam.t);
            if (params.train_embeddings) {
                adam_update(params.embeddings.entity_vecs, grads.entity, adam.m.entity,
                            adam.v.entity, schedule, params.meta_lr, adam.t);
                adam_update(params.embeddings.relation_vecs, grads.relation, adam.m.relation,
                            adam.v.relation, schedule, params.meta_lr, adam.t);
            }
        }

        TraceRow row{iter, sup, qry, qry_unadapted, std::nullopt};
        bool last = iter + 1 == schedule.iterations;
        if (!tasks.valid.empty() && ((iter + 1) % schedule.eval_every == 0 || last))
            row.val_mrr = evaluate(iter);
        result.trace.push_back(row);
    }

    if (!evaluated) result.params = params;  // no validation split: keep final
    return result;
}

void write_trace_jsonl(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    for (const auto& row : trace) {
        nlohmann::json obj{{"iter", row.iter},
                           {"support_loss", row.support_loss},
                           {"query_loss", row.query_loss},
                           {"query_loss_unadapted", row.query_loss_unadapted}};
        if (row.val_mrr) obj["val_mrr"] = *row.val_mrr;
        out << obj.dump() << '\n';
    }
}

namespace {
constexpr std::string_view kCkptMagic = "RANACKPT1";
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    io::write_magic(out, kCkptMagic);
    io::write_u32(out, static_cast<std::uint32_t>(params.embeddings.entity_vecs.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(params.embeddings.relation_vecs.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(params.embeddings.dim));
    io::write_mat_f32(out, params.embeddings.entity_vecs);
    io::write_mat_f32(out, params.embeddings.relation_vecs);

    io::write_u32(out, static_cast<std::uint32_t>(params.encoder.dim()));
    io::write_u32(out, static_cast<std::uint32_t>(params.encoder.dim_a()));
    io::write_f64(out, params.encoder.leaky_slope);
    io::write_mat_f32(out, params.encoder.W1);
    io::write_mat_f32(out, params.encoder.W2);
    io::write_mat_f32(out, params.encoder.W3);
    io::write_mat_f32(out, params.encoder.W4);
    io::write_mat_f32(out, params.encoder.W5);

    io::write_f64(out, params.gamma);
    io::write_f64(out, params.eta);
    io::write_f64(out, params.meta_lr);
    io::write_u32(out, static_cast<std::uint32_t>(params.J));
    io::write_u32(out, static_cast<std::uint32_t>(params.neighbor_cap));
    io::write_u32(out, static_cast<std::uint32_t>(params.loss_mode));
    io::write_u32(out, params.train_embeddings ? 1 : 0);
    io::write_u32(out, params.prune.tau ? 1 : 0);
    io::write_f64(out, params.prune.tau.value_or(0.0));
    io::write_u32(out, static_cast<std::uint32_t>(params.prune.similarity_space));
    if (!out) throw FormatError("write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path.string());
    io::expect_magic(in, kCkptMagic);

    ModelParams p;
    auto entities = io::read_u32(in, "entity_count");
    auto relations = io::read_u32(in, "relation_count");
    auto dim = io::read_u32(in, "dim");
    p.embeddings.dim = static_cast<int>(dim);
    p.embeddings.entity_vecs = io::read_mat_f32(in, entities, dim, "entity matrix");
    p.embeddings.relation_vecs = io::read_mat_f32(in, relations, dim, "relation matrix");

    auto enc_dim = io::read_u32(in, "encoder dim");
    auto enc_dim_a = io::read_u32(in, "encoder dim_a");
    if (enc_dim != dim)
        throw FormatError("checkpoint: encoder dim does not match embedding dim");
    p.encoder.leaky_slope = io::read_f64(in, "leaky_slope");
    p.encoder.W1 = io::read_mat_f32(in, enc_dim_a, 2 * enc_dim, "W1");
    p.encoder.W2 = io::read_mat_f32(in, 1, enc_dim_a, "W2");
    p.encoder.W3 = io::read_mat_f32(in, enc_dim, 2 * enc_dim, "W3");
    p.encoder.W4 = io::read_mat_f32(in, enc_dim, enc_dim, "W4");
    p.encoder.W5 = io::read_mat_f32(in, enc_dim, 2 * enc_dim, "W5");

    p.gamma = io::read_f64(in, "gamma");
    p.eta = io::read_f64(in, "eta");
    p.meta_lr = io::read_f64(in, "meta_lr");
    p.J = static_cast<int>(io::read_u32(in, "J"));
    p.neighbor_cap = static_cast<int>(io::read_u32(in, "neighbor_cap"));
    auto mode = io::read_u32(in, "loss_mode");
    if (mode > static_cast<std::uint32_t>(LossMode::SelfAdversarial))
        throw FormatError("checkpoint: bad loss mode value");
    p.loss_mode = static_cast<LossMode>(mode);
    p.train_embeddings = io::read_u32(in, "train_embeddings") != 0;
    bool has_tau = io::read_u32(in, "has_tau") != 0;
    double tau = io::read_f64(in, "tau");
    if (has_tau) p.prune.tau = tau;
    auto space = io::read_u32(in, "similarity_space");
    if (space > 1) throw FormatError("checkpoint: bad similarity space value");
    p.prune.similarity_space = static_cast<SimilaritySpace>(space);
    p.validate();
    return p;
}

}  // namespace rana
