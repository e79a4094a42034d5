#include "CLI11.hpp"
#include "json.hpp"

#include "ticketlab/analysis.hpp"
#include "ticketlab/metrics.hpp"
#include "ticketlab/rng.hpp"
#include "ticketlab/runner.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ticketlab;

namespace {

struct MissingArtifact : std::runtime_error {
    explicit MissingArtifact(const std::string& path)
        : std::runtime_error("missing dependency artifact: " + path) {}
};

struct NumericFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string require_file(const fs::path& p) {
    if (!fs::exists(p)) throw MissingArtifact(p.string());
    return p.string();
}

// flags > config file > TICKETLAB_OUT > built-in defaults
struct Cli {
    ExperimentConfig cfg;
    std::string config_path;
    std::string task;
    uint64_t seed = 1;
    std::string method = "s";

    std::map<std::string, std::function<void(ExperimentConfig&)>> overrides;
};

void resolve_config(CLI::App& app, Cli& cli) {
    ExperimentConfig resolved;
    if (const char* env = std::getenv("TICKETLAB_OUT")) resolved.output_dir = env;
    if (!cli.config_path.empty()) {
        std::string text = read_text_file(require_file(cli.config_path));
        std::string env_out = resolved.output_dir;
        resolved = config_from_json(text);
        if (!json::parse(text).contains("output_dir")) resolved.output_dir = env_out;
    }
    for (auto& [name, apply] : cli.overrides) {
        auto* opt = app.get_option(name);
        if (opt->count() > 0) apply(resolved);
    }
    cli.cfg = resolved;
    cli.cfg.validate();
}

int cmd_pretrain(const Cli& cli) {
    const auto& cfg = cli.cfg;
    Dataset corpus = make_pretrain_corpus(cfg.suite_seed, cfg.pretrain_size);
    TrainConfig tc = cfg.train;
    tc.epochs = cfg.pretrain_epochs;
    tc.seed = cfg.suite_seed;
    PretrainResult res = pretrain_mlm(init_params(cfg.model, cfg.suite_seed), corpus, tc);
    fs::create_directories(fs::path(cfg.output_dir) / "checkpoints");
    std::string path = (fs::path(cfg.output_dir) / "checkpoints" / "pretrained.bin").string();
    save_checkpoint(path, res.model, config_hash(cfg));
    std::cout << "masked-token accuracy " << format_fixed(res.heldout_masked_accuracy, 4)
              << " (unigram baseline " << format_fixed(res.unigram_baseline, 4) << ")\n"
              << "checkpoint " << path << "\n";
    return 0;
}

int cmd_finetune(const Cli& cli) {
    const auto& cfg = cli.cfg;
    if (cli.task.empty()) throw std::invalid_argument("finetune needs --task");
    fs::path root(cfg.output_dir);
    EncoderParams pretrained =
        load_checkpoint(require_file(root / "checkpoints" / "pretrained.bin"), config_hash(cfg));
    Task task = make_task(cli.task, cfg.suite_seed, cfg.task_train_size, cfg.task_dev_size);
    TrainConfig tc = cfg.train;
    tc.seed = cli.seed;
    FineTuneResult res = fine_tune(pretrained, task, tc, nullptr, nullptr);
    if (!std::isfinite(res.dev_metric)) throw NumericFailure("dev metric is not finite");
    std::string path = (root / "checkpoints" /
                        ("finetuned_" + cli.task + "_seed" + std::to_string(cli.seed) + ".bin"))
                           .string();
    save_checkpoint(path, res.model, config_hash(cfg));
    std::cout << "task " << cli.task << " seed " << cli.seed << " dev metric "
              << format_fixed(res.dev_metric, 4) << "\ncheckpoint " << path << "\n";
    return 0;
}

int cmd_prune(const Cli& cli) {
    const auto& cfg = cli.cfg;
    if (cli.task.empty()) throw std::invalid_argument("prune needs --task");
    PruneMethod method = prune_method_from_name(cli.method);
    fs::path root(cfg.output_dir);
    std::string ckpt = (root / "checkpoints" /
                        ("finetuned_" + cli.task + "_seed" + std::to_string(cli.seed) + ".bin"))
                           .string();
    EncoderParams model = load_checkpoint(require_file(ckpt), config_hash(cfg));
    Task task = make_task(cli.task, cfg.suite_seed, cfg.task_train_size, cfg.task_dev_size);

    fs::create_directories(root / "masks");
    fs::create_directories(root / "traces");
    std::string stem = cli.task + "_" + cli.method + "_seed" + std::to_string(cli.seed);

    PruneTrace trace;
    double full_metric = 0.0;
    MaskFile mask{1, method, cli.task, cli.seed, config_hash(cfg), {}, {}};
    if (method == PruneMethod::structured) {
        StructuredPruneResult res = structured_prune_loop(model, task, cfg.mode, cfg.prune_config());
        trace = res.trace;
        full_metric = res.full_metric;
        mask.subnet = res.mask;
    } else {
        MagnitudePruneResult res = magnitude_prune_loop(model, task, cfg.prune_config());
        trace = res.trace;
        full_metric = res.full_metric;
        mask.weights = res.mask;
    }
    save_mask((root / "masks" / (stem + ".json")).string(), mask);
    write_text_file((root / "traces" / (stem + ".csv")).string(), trace_to_csv(trace));

    std::cout << "full dev metric " << format_fixed(full_metric, 4) << ", floor "
              << format_fixed(cfg.threshold * full_metric, 4) << "\n";
    for (const auto& it : trace.iterations)
        std::cout << "iteration " << it.iteration << ": surviving "
                  << format_fixed(it.surviving_fraction, 4) << ", dev "
                  << format_fixed(it.dev_metric, 4) << ", masked " << it.masked_this_step << "\n";
    std::cout << "mask " << (root / "masks" / (stem + ".json")).string() << "\n";
    return 0;
}

int cmd_experiment(const Cli& cli) {
    ExperimentRun run = run_experiment(cli.cfg, true);
    std::cout << "config " << run.hash << ", output " << cli.cfg.output_dir << "\n";
    for (const auto& o : run.outcomes) {
        std::cout << o.task << ": full " << format_fixed(mean(o.full_metrics), 4) << " +- "
                  << format_fixed(sample_std(o.full_metrics), 4)
                  << (o.learnable ? "" : " (not learnable)") << "\n";
        for (auto method : {PruneMethod::magnitude, PruneMethod::structured}) {
            for (auto kind : {SubnetworkKind::good, SubnetworkKind::random, SubnetworkKind::bad}) {
                auto vals = retrained_metrics(o, method, kind);
                std::cout << "  " << prune_method_name(method) << "-"
                          << subnetwork_kind_name(kind) << " retrained "
                          << format_fixed(mean(vals), 4) << " +- "
                          << format_fixed(sample_std(vals), 4) << "\n";
            }
        }
    }
    return 0;
}

struct StoredRun {
    json manifest;
    std::map<std::string, std::vector<ExperimentRecord>> by_task;
    std::vector<std::string> tasks;
    std::vector<uint64_t> seeds;
};

StoredRun load_store(const std::string& out_dir) {
    fs::path root(out_dir);
    StoredRun store;
    store.manifest = json::parse(read_text_file(require_file(root / "manifest.json")));
    for (const auto& rel : store.manifest.at("records")) {
        ExperimentRecord r = record_from_json(read_text_file(require_file(root / rel.get<std::string>())));
        store.by_task[r.task].push_back(std::move(r));
    }
    for (const auto& [task, _] : store.by_task) store.tasks.push_back(task);
    store.seeds = store.manifest.at("seeds").get<std::vector<uint64_t>>();
    return store;
}

std::vector<double> slice(const std::vector<ExperimentRecord>& records, PruneMethod m,
                          SubnetworkKind k) {
    std::vector<double> out;
    for (const auto& r : records)
        if (r.method == m && r.kind == k) out.push_back(r.retrained_metric);
    return out;
}

std::vector<SubnetworkMask> good_subnets(const std::vector<ExperimentRecord>& records) {
    std::vector<SubnetworkMask> out;
    for (const auto& r : records)
        if (r.method == PruneMethod::structured && r.kind == SubnetworkKind::good)
            out.push_back(r.subnet);
    return out;
}

BinarySurvivalTable survival_table(const std::vector<SubnetworkMask>& masks, bool with_mlps) {
    BinarySurvivalTable t;
    size_t layers = masks.front().heads.size();
    size_t heads = masks.front().heads.front().size();
    for (size_t l = 0; l < layers; ++l)
        for (size_t h = 0; h < heads; ++h) {
            std::vector<uint8_t> row;
            for (const auto& m : masks) row.push_back(m.head_on(l, h) ? 1 : 0);
            t.rows.push_back(std::move(row));
        }
    if (with_mlps)
        for (size_t l = 0; l < layers; ++l) {
            std::vector<uint8_t> row;
            for (const auto& m : masks) row.push_back(m.mlp_on(l) ? 1 : 0);
            t.rows.push_back(std::move(row));
        }
    return t;
}

json stats_json(const std::vector<double>& v) {
    return json{{"mean", mean(v)}, {"std", sample_std(v)}, {"values", v}};
}

int cmd_analyze(const Cli& cli) {
    const std::string out_dir = cli.cfg.output_dir;
    StoredRun store = load_store(out_dir);
    fs::path root(out_dir);
    ExperimentConfig stored_cfg = config_from_json(read_text_file(require_file(root / "config.json")));

    json analysis;
    analysis["config_hash"] = store.manifest.at("config_hash");

    for (const auto& task : store.tasks) {
        const auto& records = store.by_task.at(task);
        json t;
        auto fulls =
            store.manifest.at("tasks").at(task).at("full_metrics").get<std::vector<double>>();
        for (double f : fulls)
            if (!std::isfinite(f)) throw NumericFailure("non-finite full metric for " + task);
        t["full"] = stats_json(fulls);
        t["learnable"] = store.manifest.at("tasks").at(task).at("learnable");

        for (auto method : {PruneMethod::magnitude, PruneMethod::structured}) {
            json m;
            for (auto kind : {SubnetworkKind::good, SubnetworkKind::random, SubnetworkKind::bad,
                              SubnetworkKind::super_survivor,
                              SubnetworkKind::random_init_random_prune}) {
                auto vals = slice(records, method, kind);
                if (vals.empty()) continue;
                json s = stats_json(vals);
                s["passes_success_criterion"] = success_criterion(mean(vals), fulls);
                m[subnetwork_kind_name(kind)] = std::move(s);
            }
            if (!m.empty()) t[prune_method_name(method)] = std::move(m);
        }

        auto goods = good_subnets(records);
        if (goods.size() >= 2) {
            BinarySurvivalTable heads_table = survival_table(goods, false);
            BinarySurvivalTable both_table = survival_table(goods, true);
            t["kappa_heads"] = fleiss_kappa(heads_table);
            t["kappa_heads_and_mlps"] = fleiss_kappa(both_table);
            CochranQResult q = cochran_q(heads_table);
            t["cochran"] = json{{"defined", q.defined}, {"q", q.q}, {"df", q.df}, {"p", q.p}};
            t["super_survivor_heads"] = super_survivors(goods).surviving_heads();
        }
        analysis["tasks"][task] = std::move(t);
    }

    if (store.tasks.size() >= 2) {
        std::vector<std::vector<SubnetworkMask>> per_task;
        for (const auto& task : store.tasks) per_task.push_back(good_subnets(store.by_task.at(task)));
        bool uniform = true;
        for (const auto& g : per_task)
            if (g.size() != per_task.front().size() || g.empty()) uniform = false;
        if (uniform) {
            OverlapMatrices ov = overlap_matrix(store.tasks, per_task);
            analysis["overlap"] = json{{"tasks", ov.tasks},
                                       {"heads", ov.heads},
                                       {"mlps", ov.mlps},
                                       {"head_mean", ov.head_mean},
                                       {"head_std", ov.head_std}};
        }
    }

    fs::path ckpt = root / "checkpoints" / "pretrained.bin";
    if (fs::exists(ckpt)) {
        EncoderParams pretrained = load_checkpoint(ckpt.string());
        for (const auto& task_name : store.tasks) {
            Task task = make_task(task_name, stored_cfg.suite_seed, stored_cfg.task_train_size,
                                  stored_cfg.task_dev_size);
            ForwardOptions opt;
            opt.want_maps = true;
            EncodeResult enc = encode(pretrained, task.dev.sequences.front(), opt);
            std::vector<AttentionMap> raw, normed;
            for (size_t l = 0; l < pretrained.config.n_layers; ++l)
                for (size_t h = 0; h < pretrained.config.n_heads; ++h) {
                    raw.push_back(raw_attention(enc.record, l, h));
                    normed.push_back(normed_attention(pretrained, enc.record, l, h));
                }
            json pat;
            pat["raw"] = pattern_distribution(raw);
            pat["normed"] = pattern_distribution(normed);
            analysis["patterns"][task_name] = std::move(pat);
        }
        json order = json::array();
        for (size_t c = 0; c < n_pattern_labels; ++c)
            order.push_back(pattern_label_name(static_cast<PatternLabel>(c)));
        analysis["pattern_label_order"] = order;
    }

    write_text_file((root / "analysis.json").string(), analysis.dump(2) + "\n");
    std::cout << analysis.dump(2) << "\n";
    return 0;
}

int cmd_report(const Cli& cli) {
    const std::string out_dir = cli.cfg.output_dir;
    StoredRun store = load_store(out_dir);
    fs::path root(out_dir);
    ExperimentConfig stored_cfg = config_from_json(read_text_file(require_file(root / "config.json")));
    fs::create_directories(root / "reports");

    std::string summary = "task,seed,method,kind,size_fraction,pruned_metric,retrained_metric\n";
    for (const auto& task : store.tasks)
        for (const auto& r : store.by_task.at(task))
            summary += r.task + "," + std::to_string(r.seed) + "," + prune_method_name(r.method) +
                       "," + subnetwork_kind_name(r.kind) + "," +
                       format_shortest(r.size_fraction) + "," + format_shortest(r.pruned_metric) +
                       "," + format_shortest(r.retrained_metric) + "\n";
    write_text_file((root / "reports" / "summary.csv").string(), summary);

    std::string aggregate = "task,method,kind,n,mean_retrained,std_retrained\n";
    for (const auto& task : store.tasks)
        for (auto method : {PruneMethod::magnitude, PruneMethod::structured})
            for (auto kind : {SubnetworkKind::good, SubnetworkKind::random, SubnetworkKind::bad,
                              SubnetworkKind::super_survivor,
                              SubnetworkKind::random_init_random_prune}) {
                auto vals = slice(store.by_task.at(task), method, kind);
                if (vals.empty()) continue;
                aggregate += task + "," + prune_method_name(method) + "," +
                             subnetwork_kind_name(kind) + "," + std::to_string(vals.size()) + "," +
                             format_fixed(mean(vals), 6) + "," +
                             format_fixed(sample_std(vals), 6) + "\n";
            }
    write_text_file((root / "reports" / "aggregate.csv").string(), aggregate);

    for (const auto& task : store.tasks) {
        auto goods = good_subnets(store.by_task.at(task));
        if (goods.empty()) continue;
        size_t layers = goods.front().heads.size();
        size_t heads = goods.front().heads.front().size();
        std::vector<std::vector<double>> mean_m(layers, std::vector<double>(heads + 1));
        std::vector<std::vector<double>> std_m(layers, std::vector<double>(heads + 1));
        for (size_t l = 0; l < layers; ++l) {
            for (size_t h = 0; h <= heads; ++h) {
                std::vector<double> bits;
                for (const auto& g : goods)
                    bits.push_back(h < heads ? (g.head_on(l, h) ? 1.0 : 0.0)
                                             : (g.mlp_on(l) ? 1.0 : 0.0));
                mean_m[l][h] = mean(bits);
                std_m[l][h] = sample_std(bits);
            }
        }
        std::vector<std::string> row_labels, col_labels;
        for (size_t l = 0; l < layers; ++l) row_labels.push_back("layer " + std::to_string(l));
        for (size_t h = 0; h < heads; ++h) col_labels.push_back("head " + std::to_string(h));
        col_labels.push_back("mlp");
        write_text_file((root / "reports" / ("survival_" + task + ".svg")).string(),
                        heatmap_svg(mean_m, &std_m, row_labels, col_labels,
                                    "survival rate: " + task));
    }

    if (store.tasks.size() >= 2) {
        std::vector<std::vector<SubnetworkMask>> per_task;
        for (const auto& task : store.tasks) per_task.push_back(good_subnets(store.by_task.at(task)));
        bool uniform = true;
        for (const auto& g : per_task)
            if (g.size() != per_task.front().size() || g.empty()) uniform = false;
        if (uniform) {
            OverlapMatrices ov = overlap_matrix(store.tasks, per_task);
            write_text_file((root / "reports" / "overlap_heads.svg").string(),
                            heatmap_svg(ov.head_mean, &ov.head_std, ov.tasks, ov.tasks,
                                        "surviving-head overlap across tasks"));
        }
    }

    for (auto method : {PruneMethod::structured, PruneMethod::magnitude}) {
        std::vector<BarSeries> series;
        BarSeries full{"full", {}};
        for (const auto& task : store.tasks)
            full.values.push_back(mean(store.manifest.at("tasks")
                                           .at(task)
                                           .at("full_metrics")
                                           .get<std::vector<double>>()));
        series.push_back(std::move(full));
        auto kinds = method == PruneMethod::structured
                         ? std::vector<SubnetworkKind>{SubnetworkKind::good, SubnetworkKind::random,
                                                       SubnetworkKind::bad,
                                                       SubnetworkKind::random_init_random_prune}
                         : std::vector<SubnetworkKind>{SubnetworkKind::good, SubnetworkKind::random,
                                                       SubnetworkKind::bad};
        for (auto kind : kinds) {
            BarSeries s{subnetwork_kind_name(kind), {}};
            bool complete = true;
            for (const auto& task : store.tasks) {
                auto vals = slice(store.by_task.at(task), method, kind);
                if (vals.empty()) complete = false;
                s.values.push_back(vals.empty() ? 0.0 : mean(vals));
            }
            if (complete) series.push_back(std::move(s));
        }
        write_text_file(
            (root / "reports" / ("bars_" + prune_method_name(method) + ".svg")).string(),
            bar_chart_svg(store.tasks, series,
                          std::string("retrained subnetworks, ") +
                              (method == PruneMethod::structured ? "structured" : "magnitude") +
                              " pruning"));
    }

    fs::path ckpt = root / "checkpoints" / "pretrained.bin";
    if (fs::exists(ckpt)) {
        EncoderParams pretrained = load_checkpoint(ckpt.string());
        fs::create_directories(root / "reports" / "maps");
        for (const auto& task_name : store.tasks) {
            Task task = make_task(task_name, stored_cfg.suite_seed, stored_cfg.task_train_size,
                                  stored_cfg.task_dev_size);
            ForwardOptions opt;
            opt.want_maps = true;
            EncodeResult enc = encode(pretrained, task.dev.sequences.front(), opt);
            for (size_t l = 0; l < pretrained.config.n_layers; ++l)
                for (size_t h = 0; h < pretrained.config.n_heads; ++h) {
                    std::string name = task_name + "_l" + std::to_string(l) + "h" +
                                       std::to_string(h) + ".pgm";
                    write_text_file((root / "reports" / "maps" / name).string(),
                                    attention_pgm(raw_attention(enc.record, l, h)));
                }
        }
    }

    std::cout << "reports written under " << (root / "reports").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale pruning and subnetwork lab\n"
                 "config precedence: flags > --config file > TICKETLAB_OUT (output root) > defaults"};
    app.require_subcommand(1);

    Cli cli;
    ExperimentConfig defaults;

    app.add_option("--config", cli.config_path, "JSON config file");

    auto opt = [&](const char* name, auto* slot, const char* help,
                   std::function<void(ExperimentConfig&)> apply) {
        auto* o = app.add_option(name, *slot, help);
        cli.overrides[name] = std::move(apply);
        return o;
    };

    static std::string out_dir, mode_name;
    static uint64_t suite_seed;
    static size_t workers, train_size, dev_size, pretrain_size, pretrain_epochs, epochs,
        batch_size, importance_samples, layers, heads, d_model, d_head, d_ff, max_seq_len;
    static double threshold, fraction, lr, dropout;
    static std::vector<uint64_t> seeds;
    static std::vector<std::string> tasks;

    opt("--out", &out_dir, "output directory", [](ExperimentConfig& c) { c.output_dir = out_dir; });
    opt("--workers", &workers, "parallel jobs", [](ExperimentConfig& c) { c.workers = workers; });
    opt("--suite-seed", &suite_seed, "data-generation seed",
        [](ExperimentConfig& c) { c.suite_seed = suite_seed; });
    opt("--train-size", &train_size, "examples per task train split",
        [](ExperimentConfig& c) { c.task_train_size = train_size; });
    opt("--dev-size", &dev_size, "examples per task dev split",
        [](ExperimentConfig& c) { c.task_dev_size = dev_size; });
    opt("--pretrain-size", &pretrain_size, "pretraining corpus size",
        [](ExperimentConfig& c) { c.pretrain_size = pretrain_size; });
    opt("--pretrain-epochs", &pretrain_epochs, "pretraining epochs",
        [](ExperimentConfig& c) { c.pretrain_epochs = pretrain_epochs; });
    opt("--epochs", &epochs, "fine-tuning epochs", [](ExperimentConfig& c) { c.train.epochs = epochs; });
    opt("--batch-size", &batch_size, "fine-tuning batch size",
        [](ExperimentConfig& c) { c.train.batch_size = batch_size; });
    opt("--lr", &lr, "learning rate", [](ExperimentConfig& c) { c.train.lr = lr; });
    opt("--threshold", &threshold, "keep pruning while dev >= threshold * full",
        [](ExperimentConfig& c) { c.threshold = threshold; });
    opt("--fraction", &fraction, "share pruned per step",
        [](ExperimentConfig& c) { c.fraction = fraction; });
    opt("--mode", &mode_name, "structured mode: heads_only | mlps_only | heads_and_mlps",
        [](ExperimentConfig& c) { c.mode = prune_mode_from_name(mode_name); });
    opt("--importance-samples", &importance_samples, "dev samples per importance pass (0 = all)",
        [](ExperimentConfig& c) { c.importance_samples = importance_samples; });
    opt("--seeds", &seeds, "experiment seeds (comma separated)",
        [](ExperimentConfig& c) { c.seeds = seeds; })
        ->delimiter(',');
    opt("--tasks", &tasks, "task subset (comma separated, default whole suite)",
        [](ExperimentConfig& c) { c.tasks = tasks; })
        ->delimiter(',');
    opt("--layers", &layers, "encoder layers", [](ExperimentConfig& c) { c.model.n_layers = layers; });
    opt("--heads", &heads, "heads per layer", [](ExperimentConfig& c) { c.model.n_heads = heads; });
    opt("--d-model", &d_model, "model width", [](ExperimentConfig& c) { c.model.d_model = d_model; });
    opt("--d-head", &d_head, "per-head width", [](ExperimentConfig& c) { c.model.d_head = d_head; });
    opt("--d-ff", &d_ff, "feed-forward width", [](ExperimentConfig& c) { c.model.d_ff = d_ff; });
    opt("--max-seq-len", &max_seq_len, "maximum sequence length",
        [](ExperimentConfig& c) { c.model.max_seq_len = max_seq_len; });
    opt("--dropout", &dropout, "dropout rate", [](ExperimentConfig& c) { c.model.dropout = dropout; });

    auto* pretrain = app.add_subcommand("pretrain", "masked-LM pretraining, saves the checkpoint");
    auto* finetune = app.add_subcommand("finetune", "fine-tune the full model on one task");
    auto* prune = app.add_subcommand("prune", "run one pruning loop on a fine-tuned checkpoint");
    auto* experiment =
        app.add_subcommand("experiment", "the whole protocol: all tasks, seeds, and subnetwork kinds");
    auto* analyze = app.add_subcommand("analyze", "agreement, overlap, and pattern statistics");
    auto* report = app.add_subcommand("report", "CSV tables, SVG figures, and map galleries");

    for (auto* sub : {pretrain, finetune, prune, experiment, analyze, report})
        sub->fallthrough();
    for (auto* sub : {finetune, prune}) {
        sub->add_option("--task", cli.task, "task name");
        sub->add_option("--seed", cli.seed, "seed");
    }
    prune->add_option("--method", cli.method, "m (magnitude) or s (structured)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        resolve_config(app, cli);
        if (pretrain->parsed()) return cmd_pretrain(cli);
        if (finetune->parsed()) return cmd_finetune(cli);
        if (prune->parsed()) return cmd_prune(cli);
        if (experiment->parsed()) return cmd_experiment(cli);
        if (analyze->parsed()) return cmd_analyze(cli);
        if (report->parsed()) return cmd_report(cli);
    } catch (const MissingArtifact& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 3;
    } catch (const std::runtime_error& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 4;
    }
    return 0;
}
