#pragma once

#include "ticketlab/io.hpp"
#include "ticketlab/subnet.hpp"

#include <string>
#include <vector>

namespace ticketlab {

// Everything the protocol produced for one task across all seeds.
struct TaskOutcome {
    std::string task;
    TaskKind kind = TaskKind::classification;
    MetricKind metric = MetricKind::accuracy;
    double baseline = 0.0;  // dev majority rate, zero for correlation metrics
    bool learnable = false;
    std::vector<double> full_metrics;           // per seed
    std::vector<SubnetworkMask> good_subnets;   // per seed
    std::vector<WeightMask> good_weights;       // per seed
    std::vector<PruneTrace> structured_traces;  // per seed
    std::vector<PruneTrace> magnitude_traces;   // per seed
    SubnetworkMask super;                       // empty when fewer than two seeds
    std::vector<ExperimentRecord> records;      // canonical order: seed, method, kind
};

struct ExperimentRun {
    ExperimentConfig config;
    std::string hash;
    double pretrain_masked_accuracy = 0.0;
    double pretrain_unigram_baseline = 0.0;
    std::vector<TaskOutcome> outcomes;
};

// Pretrains once, then per task and seed: full fine-tune, both pruning
// loops, good/random/bad reruns for both methods, the super-survivor rerun,
// and the random-init baseline. Results do not depend on the worker count.
// write_artifacts additionally persists config, manifest, checkpoint, masks,
// traces, and one JSON file per record under config.output_dir.
ExperimentRun run_experiment(const ExperimentConfig& cfg, bool write_artifacts);

// retrained metrics for one slice of a task's records, in seed order
std::vector<double> retrained_metrics(const TaskOutcome& outcome, PruneMethod method,
                                      SubnetworkKind kind);

} // namespace ticketlab
