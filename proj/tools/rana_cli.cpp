// rana: few-shot knowledge-graph-completion toolkit.
// Subcommands: synth | pretrain | train | eval | report.

#include <rana/eval.hpp>
#include <rana/synth.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw rana::ConfigError("cannot open config file: " + path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw rana::ConfigError("config file " + path + ": " + e.what());
    }
    if (!cfg.is_object()) throw rana::ConfigError("config file must hold a flat JSON object");
    return cfg;
}

// Every field is validated before any compute; problems are reported all at
// once, unknown keys included.
void check_keys(const json& cfg, const std::set<std::string>& allowed,
                std::vector<std::string>& errors) {
    for (const auto& [key, value] : cfg.items()) {
        if (!allowed.count(key)) errors.push_back("unknown config key: " + key);
        if (value.is_object() || value.is_array())
            errors.push_back("config key '" + key + "' must be a scalar (flat config)");
    }
}

void fail_if_errors(const std::vector<std::string>& errors) {
    if (errors.empty()) return;
    std::ostringstream msg;
    msg << "invalid configuration (" << errors.size() << " problem(s)):";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw rana::ConfigError(msg.str());
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw rana::FormatError("cannot write " + path.string());
    out << doc.dump(1) << '\n';
}

template <typename T>
void take(const json& cfg, const char* key, T& slot, std::vector<std::string>& errors) {
    if (!cfg.contains(key)) return;
    try {
        slot = cfg.at(key).get<T>();
    } catch (const json::exception&) {
        errors.push_back(std::string("config key '") + key + "' has the wrong type");
    }
}

// ---- synth ----

int cmd_synth(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
              const json& overrides) {
    json cfg = load_config_file(config_path);
    for (const auto& [k, v] : overrides.items()) cfg[k] = v;

    std::vector<std::string> errors;
    check_keys(cfg,
               {"entities", "background_relations", "train_tasks", "valid_tasks", "test_tasks",
                "support", "queries", "candidates", "latent_types"},
               errors);
    rana::SyntheticSpec spec;
    take(cfg, "entities", spec.entity_count, errors);
    take(cfg, "background_relations", spec.background_relations, errors);
    take(cfg, "train_tasks", spec.train_tasks, errors);
    take(cfg, "valid_tasks", spec.valid_tasks, errors);
    take(cfg, "test_tasks", spec.test_tasks, errors);
    take(cfg, "support", spec.support_size, errors);
    take(cfg, "queries", spec.query_count, errors);
    take(cfg, "candidates", spec.candidate_count, errors);
    take(cfg, "latent_types", spec.latent_types, errors);
    fail_if_errors(errors);

    auto [graph, tasks] = rana::generate_synthetic_kg(spec, seed);
    rana::save_dataset(out_dir, graph, tasks);
    std::cout << "wrote " << out_dir << ": entities=" << graph.entity_count
              << " relations=" << graph.relation_count
              << " background_triples=" << graph.background_triples.size()
              << " tasks=" << tasks.train.size() << "/" << tasks.valid.size() << "/"
              << tasks.test.size() << " seed=" << seed << "\n";
    return 0;
}

// ---- pretrain ----

int cmd_pretrain(const std::string& data_dir, const std::string& config_path,
                 const std::string& out_file, const json& overrides) {
    json cfg = load_config_file(config_path);
    for (const auto& [k, v] : overrides.items()) cfg[k] = v;

    std::vector<std::string> errors;
    check_keys(cfg, {"dim", "margin", "learning_rate", "epochs", "batch_size", "seed", "norm"},
               errors);
    rana::TransEConfig tc;
    std::string norm = "l2";
    take(cfg, "dim", tc.dim, errors);
    take(cfg, "margin", tc.margin, errors);
    take(cfg, "learning_rate", tc.learning_rate, errors);
    take(cfg, "epochs", tc.epochs, errors);
    take(cfg, "batch_size", tc.batch_size, errors);
    take(cfg, "seed", tc.seed, errors);
    take(cfg, "norm", norm, errors);
    if (norm != "l1" && norm != "l2") errors.push_back("norm must be 'l1' or 'l2'");
    if (tc.dim < 1) errors.push_back("dim must be >= 1");
    if (tc.epochs < 0) errors.push_back("epochs must be >= 0");
    if (tc.learning_rate <= 0) errors.push_back("learning_rate must be > 0");
    if (tc.batch_size < 1) errors.push_back("batch_size must be >= 1");
    fail_if_errors(errors);
    tc.norm = norm == "l1" ? rana::Norm::L1 : rana::Norm::L2;

    auto [graph, tasks] = rana::load_dataset(data_dir);
    rana::EmbeddingTable init = rana::init_embeddings(
        graph.entity_count, 2 * graph.relation_count, tc.dim, tc.seed);
    double loss_before = rana::transe_mean_loss(graph, init, tc, tc.seed);
    rana::EmbeddingTable table = rana::pretrain_transe(graph, tc);
    double loss_after = rana::transe_mean_loss(graph, table, tc, tc.seed);
    rana::save_embeddings(table, out_file);

    json echo{{"dim", tc.dim},          {"margin", tc.margin},
              {"learning_rate", tc.learning_rate}, {"epochs", tc.epochs},
              {"batch_size", tc.batch_size},       {"seed", tc.seed},
              {"norm", norm}};
    write_json(out_file + ".config.json", echo);
    std::cout << "wrote " << out_file << ": dim=" << tc.dim << " epochs=" << tc.epochs
              << " mean_loss " << loss_before << " -> " << loss_after << "\n";
    return 0;
}

// ---- shared train/eval config ----

struct RunConfig {
    double gamma = 12.0, eta = 1.0, meta_lr = 0.01;
    int J = 5, neighbor_cap = 25;
    std::string loss_mode = "attention";
    bool train_embeddings = true;
    double leaky_slope = 0.01;
    double pair_gain = 0;  // 0: calibrate to gamma
    double encode_gain = 1.0;
    int dim_a = 0;  // 0: match dim
    std::string similarity_space = "pretrained";
    double tau = std::numeric_limits<double>::quiet_NaN();  // NaN: adaptive
    int iterations = 500, eval_every = 50, tasks_per_batch = 1;
    std::string optimizer = "adam";
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

RunConfig parse_run_config(json cfg, const json& overrides) {
    for (const auto& [k, v] : overrides.items()) cfg[k] = v;
    std::vector<std::string> errors;
    check_keys(cfg,
               {"gamma", "eta", "meta_lr", "J", "neighbor_cap", "loss_mode", "train_embeddings",
                "leaky_slope", "pair_gain", "encode_gain", "dim_a", "similarity_space", "tau", "iterations", "eval_every",
                "tasks_per_batch", "optimizer", "adam_beta1", "adam_beta2", "adam_eps", "seed"},
               errors);
    RunConfig rc;
    take(cfg, "gamma", rc.gamma, errors);
    take(cfg, "eta", rc.eta, errors);
    take(cfg, "meta_lr", rc.meta_lr, errors);
    take(cfg, "J", rc.J, errors);
    take(cfg, "neighbor_cap", rc.neighbor_cap, errors);
    take(cfg, "loss_mode", rc.loss_mode, errors);
    take(cfg, "train_embeddings", rc.train_embeddings, errors);
    take(cfg, "leaky_slope", rc.leaky_slope, errors);
    take(cfg, "pair_gain", rc.pair_gain, errors);
    take(cfg, "encode_gain", rc.encode_gain, errors);
    take(cfg, "dim_a", rc.dim_a, errors);
    take(cfg, "similarity_space", rc.similarity_space, errors);
    take(cfg, "tau", rc.tau, errors);
    take(cfg, "iterations", rc.iterations, errors);
    take(cfg, "eval_every", rc.eval_every, errors);
    take(cfg, "tasks_per_batch", rc.tasks_per_batch, errors);
    take(cfg, "optimizer", rc.optimizer, errors);
    take(cfg, "adam_beta1", rc.adam_beta1, errors);
    take(cfg, "adam_beta2", rc.adam_beta2, errors);
    take(cfg, "adam_eps", rc.adam_eps, errors);
    take(cfg, "seed", rc.seed, errors);

    if (rc.gamma <= 0) errors.push_back("gamma must be > 0");
    if (rc.eta <= 0) errors.push_back("eta must be > 0");
    if (rc.meta_lr <= 0) errors.push_back("meta_lr must be > 0");
    if (rc.J < 1) errors.push_back("J must be >= 1");
    if (rc.neighbor_cap < 1) errors.push_back("neighbor_cap must be >= 1");
    if (rc.iterations < 0) errors.push_back("iterations must be >= 0");
    if (rc.eval_every < 1) errors.push_back("eval_every must be >= 1");
    if (rc.tasks_per_batch < 1) errors.push_back("tasks_per_batch must be >= 1");
    if (rc.pair_gain < 0) errors.push_back("pair_gain must be >= 0 (0 means: match gamma)");
    if (rc.encode_gain <= 0) errors.push_back("encode_gain must be > 0");
    if (rc.optimizer != "adam" && rc.optimizer != "sgd")
        errors.push_back("optimizer must be 'adam' or 'sgd'");
    if (rc.similarity_space != "pretrained" && rc.similarity_space != "encoded")
        errors.push_back("similarity_space must be 'pretrained' or 'encoded'");
    try {
        rana::parse_loss_mode(rc.loss_mode);
    } catch (const rana::ConfigError& e) {
        errors.push_back(e.what());
    }
    fail_if_errors(errors);
    return rc;
}

json echo_run_config(const RunConfig& rc) {
    json echo{{"gamma", rc.gamma},
              {"eta", rc.eta},
              {"meta_lr", rc.meta_lr},
              {"J", rc.J},
              {"neighbor_cap", rc.neighbor_cap},
              {"loss_mode", rc.loss_mode},
              {"train_embeddings", rc.train_embeddings},
              {"leaky_slope", rc.leaky_slope},
              {"pair_gain", rc.pair_gain},
              {"encode_gain", rc.encode_gain},
              {"dim_a", rc.dim_a},
              {"similarity_space", rc.similarity_space},
              {"iterations", rc.iterations},
              {"eval_every", rc.eval_every},
              {"tasks_per_batch", rc.tasks_per_batch},
              {"optimizer", rc.optimizer},
              {"adam_beta1", rc.adam_beta1},
              {"adam_beta2", rc.adam_beta2},
              {"adam_eps", rc.adam_eps},
              {"seed", rc.seed}};
    if (!std::isnan(rc.tau)) echo["tau"] = rc.tau;
    return echo;
}

json metrics_json(const rana::Metrics& m, const std::string& split) {
    return json{{"split", split},        {"mrr", m.mrr},
                {"hits1", m.hits.at(1)}, {"hits5", m.hits.at(5)},
                {"hits10", m.hits.at(10)}, {"n_queries", m.n_queries}};
}

// ---- train ----

int cmd_train(const std::string& data_dir, const std::string& emb_file,
              const std::string& config_path, const std::string& out_dir, const json& overrides) {
    RunConfig rc = parse_run_config(load_config_file(config_path), overrides);

    auto [graph, tasks] = rana::load_dataset(data_dir);
    rana::ModelParams params;
    params.embeddings = rana::load_embeddings(emb_file);
    if (params.embeddings.entity_count() != graph.entity_count ||
        params.embeddings.relation_count() != 2 * graph.relation_count)
        throw rana::ConfigError("embedding table does not match the dataset id spaces");

    int dim = params.embeddings.dim;
    params.encoder = rana::EncoderParams::init(dim, rc.dim_a > 0 ? rc.dim_a : dim, rc.leaky_slope,
                                               rana::derive_seed(rc.seed, "encoder_init"),
                                               rc.pair_gain > 0 ? rc.pair_gain : rc.gamma,
                                               rc.encode_gain);
    params.gamma = rc.gamma;
    params.eta = rc.eta;
    params.meta_lr = rc.meta_lr;
    params.J = rc.J;
    params.neighbor_cap = rc.neighbor_cap;
    params.loss_mode = rana::parse_loss_mode(rc.loss_mode);
    params.train_embeddings = rc.train_embeddings;
    if (!std::isnan(rc.tau)) params.prune.tau = rc.tau;
    params.prune.similarity_space = rc.similarity_space == "encoded"
                                        ? rana::SimilaritySpace::Encoded
                                        : rana::SimilaritySpace::Pretrained;

    rana::Schedule schedule;
    schedule.iterations = rc.iterations;
    schedule.eval_every = rc.eval_every;
    schedule.tasks_per_batch = rc.tasks_per_batch;
    schedule.optimizer = rc.optimizer;
    schedule.adam_beta1 = rc.adam_beta1;
    schedule.adam_beta2 = rc.adam_beta2;
    schedule.adam_eps = rc.adam_eps;

    rana::TrainResult result = rana::meta_train(graph, tasks, params, schedule, rc.seed);

    fs::create_directories(out_dir);
    fs::path out(out_dir);
    rana::save_checkpoint(result.params, out / "checkpoint.bin");
    rana::write_trace_jsonl(result.trace, out / "trace.jsonl");
    rana::Metrics val = rana::meta_test(tasks.valid, tasks, graph, result.params,
                                        rana::RankMode::Filtered,
                                        rana::derive_seed(rc.seed, "final_validation"));
    write_json(out / "metrics_valid.json", metrics_json(val, "valid"));
    write_json(out / "config.json", echo_run_config(rc));
    std::cout << "wrote " << out_dir << ": best_iter=" << result.best_iter
              << " best_val_mrr=" << result.best_val_mrr << " final_val_mrr=" << val.mrr << "\n";
    return 0;
}

// ---- eval ----

int cmd_eval(const std::string& data_dir, const std::string& ckpt_file, const std::string& split,
             const std::string& mode_name, std::uint64_t seed, const std::string& out_dir) {
    if (split != "valid" && split != "test")
        throw rana::ConfigError("split must be 'valid' or 'test'");
    rana::RankMode mode = rana::parse_rank_mode(mode_name);

    auto [graph, tasks] = rana::load_dataset(data_dir);
    rana::ModelParams params = rana::load_checkpoint(ckpt_file);
    if (params.embeddings.entity_count() != graph.entity_count ||
        params.embeddings.relation_count() != 2 * graph.relation_count)
        throw rana::ConfigError("checkpoint does not match the dataset id spaces");

    const auto& split_tasks = split == "valid" ? tasks.valid : tasks.test;
    rana::Metrics m = rana::meta_test(split_tasks, tasks, graph, params, mode, seed);
    json doc = metrics_json(m, split);
    std::cout << doc.dump() << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_json(fs::path(out_dir) / ("metrics_" + split + ".json"), doc);
        json echo{{"split", split}, {"mode", mode_name},  {"seed", seed},
                  {"J", params.J},  {"gamma", params.gamma}, {"eta", params.eta},
                  {"loss_mode", rana::loss_mode_name(params.loss_mode)},
                  {"support", -1}};
        echo["support"] =
            split_tasks.empty() ? 0 : static_cast<int>(split_tasks.front().support.size());
        write_json(fs::path(out_dir) / "config.json", echo);
    }
    return 0;
}

// ---- report ----

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_file,
               const std::string& x_key) {
    if (inputs.empty()) throw rana::ConfigError("report: no input files given");

    std::ofstream out(out_file);
    if (!out) throw rana::FormatError("cannot write " + out_file);
    out << "x\tmrr\tsplit\tsource\n";

    int ok = 0;
    for (const auto& input : inputs) {
        try {
            double mrr = 0;
            std::string split = "?";
            json doc;
            std::ifstream in(input);
            if (!in) throw rana::LoadError("cannot open " + input);
            if (input.ends_with(".jsonl")) {
                // Loss trace: take the last row carrying a validation MRR.
                std::string line, last;
                while (std::getline(in, line))
                    if (line.find("val_mrr") != std::string::npos) last = line;
                if (last.empty()) throw rana::LoadError("no val_mrr rows in " + input);
                doc = json::parse(last);
                mrr = doc.at("val_mrr").get<double>();
                split = "valid";
            } else {
                in >> doc;
                mrr = doc.at("mrr").get<double>();
                split = doc.value("split", "?");
            }

            // x comes from the metrics file itself or the sibling config echo.
            std::string x = "";
            if (doc.contains(x_key)) {
                x = doc.at(x_key).dump();
            } else {
                fs::path sibling = fs::path(input).parent_path() / "config.json";
                if (fs::exists(sibling)) {
                    json cfg;
                    std::ifstream cin(sibling);
                    cin >> cfg;
                    if (cfg.contains(x_key)) x = cfg.at(x_key).dump();
                }
            }
            if (x.empty()) {
                std::cerr << "warning: " << input << ": key '" << x_key
                          << "' not found in file or sibling config.json\n";
            }
            out << x << '\t' << mrr << '\t' << split << '\t' << input << '\n';
            ++ok;
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << input << ": " << e.what() << "\n";
        }
    }
    if (ok == 0) throw rana::LoadError("report: every input failed to parse");
    std::cout << "wrote " << out_file << " (" << ok << "/" << inputs.size() << " inputs)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot knowledge-graph completion toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
    std::string s_out, s_config;
    std::uint64_t s_seed = 0;
    json s_over = json::object();
    synth->add_option("--out", s_out, "output dataset directory")->required();
    synth->add_option("--config", s_config, "flat JSON config file");
    synth->add_option("--seed", s_seed, "generation seed");
    for (const char* key : {"entities", "background_relations", "train_tasks", "valid_tasks",
                            "test_tasks", "support", "queries", "candidates", "latent_types"}) {
        synth->add_option_function<int>(
            std::string("--") + key, [&s_over, key](int v) { s_over[key] = v; });
    }

    // pretrain
    auto* pretrain = app.add_subcommand("pretrain", "TransE-pretrain background embeddings");
    std::string p_data, p_config, p_out;
    pretrain->add_option("--data", p_data, "dataset directory")->required();
    pretrain->add_option("--out", p_out, "output embedding file")->required();
    pretrain->add_option("--config", p_config, "flat JSON config file");
    json p_over = json::object();
    pretrain->add_option_function<int>("--dim", [&](int v) { p_over["dim"] = v; });
    pretrain->add_option_function<int>("--epochs", [&](int v) { p_over["epochs"] = v; });
    pretrain->add_option_function<double>("--lr", [&](double v) { p_over["learning_rate"] = v; });
    pretrain->add_option_function<double>("--margin", [&](double v) { p_over["margin"] = v; });
    pretrain->add_option_function<int>("--batch-size", [&](int v) { p_over["batch_size"] = v; });
    pretrain->add_option_function<std::uint64_t>("--seed",
                                                 [&](std::uint64_t v) { p_over["seed"] = v; });
    pretrain->add_option_function<std::string>("--norm",
                                               [&](std::string v) { p_over["norm"] = v; });

    // train
    auto* train = app.add_subcommand("train", "meta-train on the train split");
    std::string t_data, t_emb, t_config, t_out;
    train->add_option("--data", t_data, "dataset directory")->required();
    train->add_option("--embeddings", t_emb, "pretrained embedding file")->required();
    train->add_option("--out", t_out, "output directory")->required();
    train->add_option("--config", t_config, "flat JSON config file");
    json t_over = json::object();
    train->add_option_function<int>("--iterations", [&](int v) { t_over["iterations"] = v; });
    train->add_option_function<int>("--eval-every", [&](int v) { t_over["eval_every"] = v; });
    train->add_option_function<int>("--J", [&](int v) { t_over["J"] = v; });
    train->add_option_function<int>("--neighbor-cap", [&](int v) { t_over["neighbor_cap"] = v; });
    train->add_option_function<double>("--gamma", [&](double v) { t_over["gamma"] = v; });
    train->add_option_function<double>("--eta", [&](double v) { t_over["eta"] = v; });
    train->add_option_function<double>("--meta-lr", [&](double v) { t_over["meta_lr"] = v; });
    train->add_option_function<double>("--tau", [&](double v) { t_over["tau"] = v; });
    train->add_option_function<double>("--pair-gain", [&](double v) { t_over["pair_gain"] = v; });
    train->add_option_function<double>("--encode-gain",
                                       [&](double v) { t_over["encode_gain"] = v; });
    train->add_option_function<std::string>("--loss-mode",
                                            [&](std::string v) { t_over["loss_mode"] = v; });
    train->add_option_function<std::string>("--optimizer",
                                            [&](std::string v) { t_over["optimizer"] = v; });
    train->add_option_function<std::uint64_t>("--seed",
                                              [&](std::uint64_t v) { t_over["seed"] = v; });
    train->add_flag_function("--freeze-embeddings",
                             [&](std::int64_t) { t_over["train_embeddings"] = false; });

    // eval
    auto* eval = app.add_subcommand("eval", "meta-test a checkpoint");
    std::string e_data, e_ckpt, e_split = "test", e_mode = "filtered", e_out;
    std::uint64_t e_seed = 0;
    eval->add_option("--data", e_data, "dataset directory")->required();
    eval->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
    eval->add_option("--split", e_split, "valid | test");
    eval->add_option("--mode", e_mode, "raw | filtered");
    eval->add_option("--seed", e_seed, "evaluation seed");
    eval->add_option("--out", e_out, "optional output directory");

    // report
    auto* report = app.add_subcommand("report", "merge metrics/traces into plot-ready TSV");
    std::vector<std::string> r_inputs;
    std::string r_out, r_xkey = "J";
    report->add_option("inputs", r_inputs, "metrics JSON or trace JSONL files");
    report->add_option("--out", r_out, "output TSV path")->required();
    report->add_option("--x-key", r_xkey, "config key used as the sweep x value");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(s_config, s_out, s_seed, s_over);
        if (pretrain->parsed()) return cmd_pretrain(p_data, p_config, p_out, p_over);
        if (train->parsed()) return cmd_train(t_data, t_emb, t_config, t_out, t_over);
        if (eval->parsed()) return cmd_eval(e_data, e_ckpt, e_split, e_mode, e_seed, e_out);
        if (report->parsed()) return cmd_report(r_inputs, r_out, r_xkey);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
