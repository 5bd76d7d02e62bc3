#include "rana/embedding.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace rana {
namespace {

constexpr std::string_view kMagic = "RANAEMB1";

void normalize_entity_rows(Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double n = m.row(r).norm();
        if (n > 0) m.row(r) /= n;
    }
}

// Training triples: background plus the inverse-direction copies, so the
// doubled relation id space used by NeighborIndex is fully trained.
std::vector<Triple> augmented_triples(const KnowledgeGraph& graph) {
    std::vector<Triple> triples = graph.background_triples;
    triples.reserve(graph.background_triples.size() * 2);
    for (const auto& t : graph.background_triples)
        triples.push_back({t.tail, NeighborIndex::inverse_rel(t.rel, graph.relation_count), t.head});
    return triples;
}

Triple corrupt(const Triple& t, int entity_count, std::mt19937_64& rng) {
    std::bernoulli_distribution corrupt_tail(0.5);
    std::uniform_int_distribution<int> pick(0, entity_count - 1);
    Triple neg = t;
    if (corrupt_tail(rng)) {
        do { neg.tail = pick(rng); } while (neg.tail == t.tail && entity_count > 1);
    } else {
        do { neg.head = pick(rng); } while (neg.head == t.head && entity_count > 1);
    }
    return neg;
}

double distance(const EmbeddingTable& table, const Triple& t, Norm norm) {
    Vec v = table.entity_vecs.row(t.head).transpose() + table.relation_vecs.row(t.rel).transpose() -
            table.entity_vecs.row(t.tail).transpose();
    return norm == Norm::L2 ? v.norm() : v.lpNorm<1>();
}

Vec distance_grad(const EmbeddingTable& table, const Triple& t, Norm norm) {
    Vec v = table.entity_vecs.row(t.head).transpose() + table.relation_vecs.row(t.rel).transpose() -
            table.entity_vecs.row(t.tail).transpose();
    if (norm == Norm::L2) {
        double n = v.norm();
        return n > 0 ? Vec(v / n) : Vec(Vec::Zero(v.size()));
    }
    return v.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

}  // namespace

EmbeddingTable init_embeddings(int entity_count, int relation_count, int dim, std::uint64_t seed) {
    if (entity_count < 1 || relation_count < 1 || dim < 1)
        throw ContractError("init_embeddings: counts and dim must be >= 1");
    auto rng = make_rng(seed, "init_embeddings");
    double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> dist(-bound, bound);

    EmbeddingTable table;
    table.dim = dim;
    table.entity_vecs = Mat(entity_count, dim);
    table.relation_vecs = Mat(relation_count, dim);
    for (Eigen::Index r = 0; r < table.entity_vecs.rows(); ++r)
        for (Eigen::Index c = 0; c < dim; ++c) table.entity_vecs(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < table.relation_vecs.rows(); ++r)
        for (Eigen::Index c = 0; c < dim; ++c) table.relation_vecs(r, c) = dist(rng);
    normalize_entity_rows(table.entity_vecs);
    return table;
}

double transe_mean_loss(const KnowledgeGraph& graph, const EmbeddingTable& table,
                        const TransEConfig& cfg, std::uint64_t corruption_seed) {
    auto triples = augmented_triples(graph);
    if (triples.empty()) return 0.0;
    auto rng = make_rng(corruption_seed, "transe_eval");
    double total = 0;
    for (const auto& t : triples) {
        Triple neg = corrupt(t, graph.entity_count, rng);
        total += std::max(0.0, cfg.margin + distance(table, t, cfg.norm) -
                                   distance(table, neg, cfg.norm));
    }
    return total / static_cast<double>(triples.size());
}

EmbeddingTable pretrain_transe(const KnowledgeGraph& graph, const TransEConfig& cfg) {
    if (cfg.epochs > 0 && graph.background_triples.empty())
        throw ContractError("pretrain_transe: empty background graph");
    EmbeddingTable table =
        init_embeddings(std::max(graph.entity_count, 1), std::max(graph.relation_count * 2, 1),
                        cfg.dim, cfg.seed);
    if (cfg.epochs == 0) return table;

    auto triples = augmented_triples(graph);
    std::vector<std::size_t> order(triples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(cfg.seed, "transe_epoch", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Mat ent_grad = Mat::Zero(table.entity_vecs.rows(), table.dim);
            Mat rel_grad = Mat::Zero(table.relation_vecs.rows(), table.dim);

            for (std::size_t i = start; i < end; ++i) {
                const Triple& pos = triples[order[i]];
                Triple neg = corrupt(pos, graph.entity_count, rng);
                double margin_loss =
                    cfg.margin + distance(table, pos, cfg.norm) - distance(table, neg, cfg.norm);
                if (margin_loss <= 0) continue;
                epoch_loss += margin_loss;

                Vec gp = distance_grad(table, pos, cfg.norm);
                ent_grad.row(pos.head) += gp.transpose();
                rel_grad.row(pos.rel) += gp.transpose();
                ent_grad.row(pos.tail) -= gp.transpose();
                Vec gn = distance_grad(table, neg, cfg.norm);
                ent_grad.row(neg.head) -= gn.transpose();
                rel_grad.row(neg.rel) -= gn.transpose();
                ent_grad.row(neg.tail) += gn.transpose();
            }
            table.entity_vecs -= cfg.learning_rate * ent_grad;
            table.relation_vecs -= cfg.learning_rate * rel_grad;
        }

        normalize_entity_rows(table.entity_vecs);
        epoch_loss /= static_cast<double>(triples.size());
        if (!std::isfinite(epoch_loss) || !table.entity_vecs.allFinite() ||
            !table.relation_vecs.allFinite())
            throw TrainingError("pretrain_transe: non-finite loss at epoch " +
                                std::to_string(epoch));
    }
    return table;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    io::write_magic(out, kMagic);
    io::write_u32(out, static_cast<std::uint32_t>(table.entity_vecs.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(table.relation_vecs.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(table.dim));
    io::write_mat_f32(out, table.entity_vecs);
    io::write_mat_f32(out, table.relation_vecs);
    if (!out) throw FormatError("write failed: " + path.string());
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path.string());
    io::expect_magic(in, kMagic);
    auto entities = io::read_u32(in, "entity_count");
    auto relations = io::read_u32(in, "relation_count");
    auto dim = io::read_u32(in, "dim");
    if (entities == 0 || relations == 0 || dim == 0)
        throw FormatError("embedding file declares zero-sized table: " + path.string());
    EmbeddingTable table;
    table.dim = static_cast<int>(dim);
    table.entity_vecs = io::read_mat_f32(in, entities, dim, "entity matrix");
    table.relation_vecs = io::read_mat_f32(in, relations, dim, "relation matrix");
    return table;
}

}  // namespace rana
