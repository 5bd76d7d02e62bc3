#include "rana/kg.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace rana {
namespace {

using nlohmann::json;

std::ifstream open_or_throw(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw LoadError("missing or unreadable file: " + p.string());
    return in;
}

std::vector<std::string> read_name_table(const std::filesystem::path& p) {
    auto in = open_or_throw(p);
    std::vector<std::string> names;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw LoadError(p.string() + ":" + std::to_string(lineno) + ": expected <id>\\t<name>");
        int id = std::stoi(line.substr(0, tab));
        if (id != static_cast<int>(names.size()))
            throw ValidationError(p.string() + ":" + std::to_string(lineno) +
                                  ": ids must be dense from 0, got " + std::to_string(id));
        names.push_back(line.substr(tab + 1));
    }
    return names;
}

std::vector<FewShotTask> read_tasks(const std::filesystem::path& p) {
    auto in = open_or_throw(p);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw LoadError(p.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw LoadError(p.string() + ": top-level value must be an array");
    std::vector<FewShotTask> tasks;
    for (const auto& obj : doc) {
        FewShotTask t;
        t.rel = obj.at("rel").get<int>();
        for (const auto& pr : obj.at("support"))
            t.support.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
        for (const auto& pr : obj.at("queries"))
            t.queries.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
        t.candidates = obj.at("candidates").get<std::vector<int>>();
        tasks.push_back(std::move(t));
    }
    return tasks;
}

json tasks_to_json(const std::vector<FewShotTask>& tasks) {
    json arr = json::array();
    for (const auto& t : tasks) {
        json obj;
        obj["rel"] = t.rel;
        json sup = json::array(), qry = json::array();
        for (auto [h, tl] : t.support) sup.push_back({h, tl});
        for (auto [h, tl] : t.queries) qry.push_back({h, tl});
        obj["support"] = std::move(sup);
        obj["queries"] = std::move(qry);
        obj["candidates"] = t.candidates;
        arr.push_back(std::move(obj));
    }
    return arr;
}

void check_entity(int e, const KnowledgeGraph& g, std::vector<std::string>& errors,
                  const std::string& where) {
    if (e < 0 || e >= g.entity_count)
        errors.push_back(where + ": entity id " + std::to_string(e) + " out of range [0, " +
                         std::to_string(g.entity_count) + ")");
}

}  // namespace

void validate_dataset(const KnowledgeGraph& graph, const TaskSet& tasks) {
    std::vector<std::string> errors;

    std::set<std::tuple<int, int, int>> seen;
    for (const auto& tr : graph.background_triples) {
        check_entity(tr.head, graph, errors, "background");
        check_entity(tr.tail, graph, errors, "background");
        if (tr.rel < 0 || tr.rel >= graph.relation_count)
            errors.push_back("background: relation id " + std::to_string(tr.rel) + " out of range");
        if (!seen.insert({tr.head, tr.rel, tr.tail}).second)
            errors.push_back("background: duplicate triple (" + std::to_string(tr.head) + ", " +
                             std::to_string(tr.rel) + ", " + std::to_string(tr.tail) + ")");
    }

    std::unordered_set<int> fewshot_rels;
    auto check_split = [&](const std::vector<FewShotTask>& split, const char* name) {
        for (const auto& t : split) {
            std::string where = std::string(name) + " task rel=" + std::to_string(t.rel);
            if (t.rel < 0 || t.rel >= graph.relation_count)
                errors.push_back(where + ": relation id out of range");
            if (!fewshot_rels.insert(t.rel).second)
                errors.push_back(where + ": relation id appears in more than one task/split");
            if (t.support.empty()) errors.push_back(where + ": support set is empty");
            std::set<std::pair<int, int>> sup(t.support.begin(), t.support.end());
            for (auto [h, tl] : t.support) {
                check_entity(h, graph, errors, where);
                check_entity(tl, graph, errors, where);
            }
            std::unordered_set<int> cand(t.candidates.begin(), t.candidates.end());
            for (int c : t.candidates) check_entity(c, graph, errors, where);
            for (auto [h, tl] : t.queries) {
                check_entity(h, graph, errors, where);
                check_entity(tl, graph, errors, where);
                if (sup.count({h, tl}))
                    errors.push_back(where + ": pair (" + std::to_string(h) + ", " +
                                     std::to_string(tl) + ") appears in both support and queries");
                if (!cand.count(tl))
                    errors.push_back(where + ": true tail " + std::to_string(tl) +
                                     " missing from candidates");
            }
        }
    };
    check_split(tasks.train, "train");
    check_split(tasks.valid, "valid");
    check_split(tasks.test, "test");

    for (const auto& tr : graph.background_triples)
        if (fewshot_rels.count(tr.rel))
            errors.push_back("background: few-shot relation " + std::to_string(tr.rel) +
                             " appears in background triples");

    if (!errors.empty()) {
        std::ostringstream msg;
        msg << "dataset validation failed (" << errors.size() << " problem(s)):";
        for (const auto& e : errors) msg << "\n  - " << e;
        throw ValidationError(msg.str());
    }
}

std::pair<KnowledgeGraph, TaskSet> load_dataset(const std::filesystem::path& dir) {
    KnowledgeGraph graph;
    graph.entity_names = read_name_table(dir / "entities.tsv");
    graph.relation_names = read_name_table(dir / "relations.tsv");
    graph.entity_count = static_cast<int>(graph.entity_names.size());
    graph.relation_count = static_cast<int>(graph.relation_names.size());

    {
        auto in = open_or_throw(dir / "background.tsv");
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream row(line);
            Triple t;
            if (!(row >> t.head >> t.rel >> t.tail))
                throw LoadError((dir / "background.tsv").string() + ":" + std::to_string(lineno) +
                                ": expected <head>\\t<rel>\\t<tail>");
            graph.background_triples.push_back(t);
        }
    }

    TaskSet tasks;
    tasks.train = read_tasks(dir / "tasks_train.json");
    tasks.valid = read_tasks(dir / "tasks_valid.json");
    tasks.test = read_tasks(dir / "tasks_test.json");

    validate_dataset(graph, tasks);
    return {std::move(graph), std::move(tasks)};
}

void save_dataset(const std::filesystem::path& dir, const KnowledgeGraph& graph,
                  const TaskSet& tasks) {
    std::filesystem::create_directories(dir);
    auto write_names = [&](const std::filesystem::path& p, const std::vector<std::string>& names,
                           int count, const char* prefix) {
        std::ofstream out(p);
        for (int i = 0; i < count; ++i) {
            std::string name = i < static_cast<int>(names.size()) && !names[i].empty()
                                   ? names[i]
                                   : prefix + std::to_string(i);
            out << i << '\t' << name << '\n';
        }
    };
    write_names(dir / "entities.tsv", graph.entity_names, graph.entity_count, "e");
    write_names(dir / "relations.tsv", graph.relation_names, graph.relation_count, "r");

    {
        std::ofstream out(dir / "background.tsv");
        for (const auto& t : graph.background_triples)
            out << t.head << '\t' << t.rel << '\t' << t.tail << '\n';
    }
    auto write_tasks = [&](const std::filesystem::path& p, const std::vector<FewShotTask>& ts) {
        std::ofstream out(p);
        out << tasks_to_json(ts).dump(1) << '\n';
    };
    write_tasks(dir / "tasks_train.json", tasks.train);
    write_tasks(dir / "tasks_valid.json", tasks.valid);
    write_tasks(dir / "tasks_test.json", tasks.test);
}

NeighborIndex build_neighbor_index(const KnowledgeGraph& graph, int cap, std::uint64_t seed) {
    if (cap < 1) throw ContractError("build_neighbor_index: cap must be >= 1");
    NeighborIndex index;
    index.cap = cap;
    index.neighbors.resize(graph.entity_count);
    for (const auto& t : graph.background_triples) {
        index.neighbors[t.head].emplace_back(t.rel, t.tail);
        index.neighbors[t.tail].emplace_back(
            NeighborIndex::inverse_rel(t.rel, graph.relation_count), t.head);
    }
    // Subsample once at build time; per-epoch resampling is out of the default path.
    for (int e = 0; e < graph.entity_count; ++e) {
        auto& list = index.neighbors[e];
        if (static_cast<int>(list.size()) <= cap) continue;
        auto rng = make_rng(seed, "neighbor_subsample", static_cast<std::uint64_t>(e));
        for (int i = 0; i < cap; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, list.size() - 1);
            std::swap(list[i], list[pick(rng)]);
        }
        list.resize(cap);
    }
    return index;
}

}  // namespace rana
