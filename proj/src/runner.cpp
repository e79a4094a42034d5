#include "ticketlab/runner.hpp"

#include "ticketlab/metrics.hpp"
#include "ticketlab/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace ticketlab {

namespace {

namespace fs = std::filesystem;

// Full fine-tuned runs must clear the trivial baseline by this much before a
// task counts as learnable; the label-shuffled control stays under it.
constexpr double k_learnable_margin = 0.05;

// Jobs only touch their own output slots, so a shared index is the only
// coordination needed. Worker count never changes any result, just the wall
// clock.
void run_jobs(const std::vector<std::function<void()>>& jobs, size_t workers) {
    if (workers <= 1 || jobs.size() <= 1) {
        for (const auto& job : jobs) job();
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                jobs[i]();
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    size_t n = std::min(workers, jobs.size());
    threads.reserve(n);
    for (size_t i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct SeedWork {
    double full_metric = 0.0;
    EncoderParams fine_tuned;
    StructuredPruneResult structured;
    MagnitudePruneResult magnitude;
    std::vector<ExperimentRecord> records;
};

size_t kind_rank(SubnetworkKind k) { return static_cast<size_t>(k); }
size_t method_rank(PruneMethod m) { return m == PruneMethod::magnitude ? 0 : 1; }

void sort_records(std::vector<ExperimentRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        if (a.seed != b.seed) return a.seed < b.seed;
        if (method_rank(a.method) != method_rank(b.method))
            return method_rank(a.method) < method_rank(b.method);
        return kind_rank(a.kind) < kind_rank(b.kind);
    });
}

std::string record_filename(const ExperimentRecord& r) {
    return prune_method_name(r.method) + "_" + subnetwork_kind_name(r.kind) + "_seed" +
           std::to_string(r.seed) + ".json";
}

} // namespace

std::vector<double> retrained_metrics(const TaskOutcome& outcome, PruneMethod method,
                                      SubnetworkKind kind) {
    std::vector<double> out;
    for (const auto& r : outcome.records)
        if (r.method == method && r.kind == kind) out.push_back(r.retrained_metric);
    return out;
}

ExperimentRun run_experiment(const ExperimentConfig& cfg, bool write_artifacts) {
    cfg.validate();

    ExperimentRun run;
    run.config = cfg;
    run.hash = config_hash(cfg);

    Dataset corpus = make_pretrain_corpus(cfg.suite_seed, cfg.pretrain_size);
    EncoderParams init = init_params(cfg.model, cfg.suite_seed);
    TrainConfig pretrain_cfg = cfg.train;
    pretrain_cfg.epochs = cfg.pretrain_epochs;
    pretrain_cfg.seed = cfg.suite_seed;
    PretrainResult pre = pretrain_mlm(init, corpus, pretrain_cfg);
    run.pretrain_masked_accuracy = pre.heldout_masked_accuracy;
    run.pretrain_unigram_baseline = pre.unigram_baseline;
    const EncoderParams& pretrained = pre.model;

    std::vector<std::string> names = cfg.tasks.empty() ? task_names() : cfg.tasks;
    std::vector<Task> tasks;
    tasks.reserve(names.size());
    for (const auto& n : names)
        tasks.push_back(make_task(n, cfg.suite_seed, cfg.task_train_size, cfg.task_dev_size));

    size_t n_tasks = tasks.size(), n_seeds = cfg.seeds.size();
    std::vector<std::vector<SeedWork>> work(n_tasks);
    for (auto& w : work) w.resize(n_seeds);

    PruneConfig prune_cfg = cfg.prune_config();

    std::vector<std::function<void()>> jobs;
    for (size_t t = 0; t < n_tasks; ++t) {
        for (size_t s = 0; s < n_seeds; ++s) {
            jobs.push_back([&, t, s] {
                const Task& task = tasks[t];
                uint64_t seed = cfg.seeds[s];
                SeedWork& slot = work[t][s];

                TrainConfig train_cfg = cfg.train;
                train_cfg.seed = seed;
                FineTuneResult full = fine_tune(pretrained, task, train_cfg, nullptr, nullptr);
                slot.full_metric = full.dev_metric;
                slot.fine_tuned = std::move(full.model);

                slot.structured = structured_prune_loop(slot.fine_tuned, task, cfg.mode, prune_cfg);
                slot.magnitude = magnitude_prune_loop(slot.fine_tuned, task, prune_cfg);

                for (auto kind : {SubnetworkKind::good, SubnetworkKind::random, SubnetworkKind::bad}) {
                    slot.records.push_back(lth_experiment(pretrained, slot.fine_tuned, task, seed,
                                                          PruneMethod::structured, kind,
                                                          &slot.structured.mask, nullptr, cfg.train));
                    slot.records.push_back(lth_experiment(pretrained, slot.fine_tuned, task, seed,
                                                          PruneMethod::magnitude, kind, nullptr,
                                                          &slot.magnitude.mask, cfg.train));
                }
                slot.records.push_back(random_init_baseline(cfg.model, task, seed,
                                                            slot.structured.mask, cfg.train));
            });
        }
    }
    run_jobs(jobs, cfg.workers);

    std::vector<SubnetworkMask> supers(n_tasks);
    std::vector<std::function<void()>> super_jobs;
    for (size_t t = 0; t < n_tasks; ++t) {
        if (n_seeds < 2) continue;
        std::vector<SubnetworkMask> goods;
        for (size_t s = 0; s < n_seeds; ++s) goods.push_back(work[t][s].structured.mask);
        supers[t] = super_survivors(goods);
        for (size_t s = 0; s < n_seeds; ++s) {
            super_jobs.push_back([&, t, s] {
                work[t][s].records.push_back(
                    run_subnetwork(pretrained, work[t][s].fine_tuned, tasks[t], cfg.seeds[s],
                                   PruneMethod::structured, SubnetworkKind::super_survivor,
                                   &supers[t], nullptr, cfg.train));
            });
        }
    }
    run_jobs(super_jobs, cfg.workers);

    for (size_t t = 0; t < n_tasks; ++t) {
        TaskOutcome outcome;
        outcome.task = tasks[t].spec.name;
        outcome.kind = tasks[t].spec.kind;
        outcome.metric = tasks[t].spec.metric;
        outcome.baseline = tasks[t].spec.kind == TaskKind::classification
                               ? majority_class_rate(tasks[t].dev)
                               : 0.0;
        outcome.super = supers[t];
        for (size_t s = 0; s < n_seeds; ++s) {
            SeedWork& slot = work[t][s];
            outcome.full_metrics.push_back(slot.full_metric);
            outcome.good_subnets.push_back(slot.structured.mask);
            outcome.good_weights.push_back(slot.magnitude.mask);
            outcome.structured_traces.push_back(slot.structured.trace);
            outcome.magnitude_traces.push_back(slot.magnitude.trace);
            for (auto& r : slot.records) outcome.records.push_back(std::move(r));
        }
        outcome.learnable = mean(outcome.full_metrics) >= outcome.baseline + k_learnable_margin;
        sort_records(outcome.records);
        run.outcomes.push_back(std::move(outcome));
    }

    if (write_artifacts) {
        fs::path root(cfg.output_dir);
        fs::create_directories(root / "checkpoints");
        fs::create_directories(root / "masks");
        fs::create_directories(root / "traces");
        write_text_file((root / "config.json").string(), config_to_json(cfg));
        save_checkpoint((root / "checkpoints" / "pretrained.bin").string(), pretrained, run.hash);

        std::vector<std::string> record_paths;
        for (const auto& outcome : run.outcomes) {
            fs::create_directories(root / "records" / outcome.task);
            for (size_t s = 0; s < n_seeds; ++s) {
                uint64_t seed = cfg.seeds[s];
                std::string stem = outcome.task + "_s_seed" + std::to_string(seed);
                MaskFile good_s{1, PruneMethod::structured, outcome.task, seed, run.hash,
                                outcome.good_subnets[s], {}};
                save_mask((root / "masks" / (stem + ".json")).string(), good_s);
                write_text_file((root / "traces" / (stem + ".csv")).string(),
                                trace_to_csv(outcome.structured_traces[s]));

                std::string mstem = outcome.task + "_m_seed" + std::to_string(seed);
                MaskFile good_m{1, PruneMethod::magnitude, outcome.task, seed, run.hash,
                                {}, outcome.good_weights[s]};
                save_mask((root / "masks" / (mstem + ".json")).string(), good_m);
                write_text_file((root / "traces" / (mstem + ".csv")).string(),
                                trace_to_csv(outcome.magnitude_traces[s]));
            }
            for (const auto& r : outcome.records) {
                std::string rel = "records/" + outcome.task + "/" + record_filename(r);
                write_text_file((root / rel).string(), record_to_json(r));
                record_paths.push_back(rel);
            }
        }
        std::sort(record_paths.begin(), record_paths.end());

        nlohmann::json tasks_meta;
        for (const auto& o : run.outcomes)
            tasks_meta[o.task] = {{"learnable", o.learnable},
                                  {"baseline", o.baseline},
                                  {"metric", o.metric == MetricKind::accuracy  ? "accuracy"
                                             : o.metric == MetricKind::matthews ? "matthews"
                                                                                : "pearson"},
                                  {"full_metrics", o.full_metrics}};
        nlohmann::json manifest{{"config_hash", run.hash},
                                {"seeds", cfg.seeds},
                                {"pretrain_masked_accuracy", run.pretrain_masked_accuracy},
                                {"pretrain_unigram_baseline", run.pretrain_unigram_baseline},
                                {"tasks", tasks_meta},
                                {"records", record_paths}};
        write_text_file((root / "manifest.json").string(), manifest.dump(2) + "\n");
    }

    return run;
}

} // namespace ticketlab
