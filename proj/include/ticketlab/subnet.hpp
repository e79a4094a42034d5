#pragma once

#include "ticketlab/encoder.hpp"
#include "ticketlab/pruning.hpp"
#include "ticketlab/tasks.hpp"
#include "ticketlab/training.hpp"

#include <string>
#include <vector>

namespace ticketlab {

enum class SubnetworkKind { good, random, bad, super_survivor, random_init_random_prune };
enum class PruneMethod { magnitude, structured };

std::string subnetwork_kind_name(SubnetworkKind kind);
SubnetworkKind subnetwork_kind_from_name(const std::string& name);
std::string prune_method_name(PruneMethod method);  // "m" | "s"
PruneMethod prune_method_from_name(const std::string& name);

struct ExperimentRecord {
    std::string task;
    uint64_t seed = 0;
    PruneMethod method = PruneMethod::structured;
    SubnetworkKind kind = SubnetworkKind::good;
    SubnetworkMask subnet;   // structured masks
    WeightMask weights;      // magnitude masks
    double size_fraction = 1.0;
    double pruned_metric = 0.0;
    double retrained_metric = 0.0;
    bool retrained = false;
    std::string trace_ref;
};

// Uniformly random mask with the same surviving counts as `good`;
// heads and MLPs are matched separately, weights matched in total.
SubnetworkMask sample_random_subnetwork(const SubnetworkMask& good, Rng& rng);
WeightMask sample_random_subnetwork(const WeightMask& good, Rng& rng);

// Same size as `good`, preferring elements good dropped; when those run out
// the balance is a uniform sample of good's survivors, so
// overlap(bad, good) = max(0, |good| - |non-survivors|) exactly.
SubnetworkMask sample_bad_subnetwork(const SubnetworkMask& good, Rng& rng);
WeightMask sample_bad_subnetwork(const WeightMask& good, Rng& rng);

// Elementwise AND over per-seed masks; needs at least two of the same shape.
SubnetworkMask super_survivors(const std::vector<SubnetworkMask>& masks);

// Evaluates the masked fine-tuned model, then rewinds the body to the
// pre-trained checkpoint (embeddings included), gives the task head a fresh
// init from `seed`, and fine-tunes under the same mask. Exactly one of
// subnet/weights applies, matching `method`.
ExperimentRecord run_subnetwork(const EncoderParams& pretrained, const EncoderParams& fine_tuned,
                                const Task& task, uint64_t seed, PruneMethod method,
                                SubnetworkKind kind, const SubnetworkMask* subnet,
                                const WeightMask* weights, const TrainConfig& base_cfg);

// The standard protocol step for kinds good/random/bad: derive the mask from
// the good one (rng seeded by task, seed, method, kind) and run it.
ExperimentRecord lth_experiment(const EncoderParams& pretrained, const EncoderParams& fine_tuned,
                                const Task& task, uint64_t seed, PruneMethod method,
                                SubnetworkKind kind, const SubnetworkMask* good_subnet,
                                const WeightMask* good_weights, const TrainConfig& base_cfg);

// No pretraining at all: fresh random weights plus a random structured mask
// sized like the reference, fine-tuned as usual.
ExperimentRecord random_init_baseline(const ModelConfig& cfg, const Task& task, uint64_t seed,
                                      const SubnetworkMask& size_reference,
                                      const TrainConfig& base_cfg);

// retrained metric clears mean(full) - std(full); closed boundary
bool success_criterion(double retrained_metric, const std::vector<double>& full_metrics_per_seed);

} // namespace ticketlab
