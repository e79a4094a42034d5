#pragma once

#include "ticketlab/encoder.hpp"
#include "ticketlab/tasks.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ticketlab {

// Mean absolute mask sensitivities. Entries for already-pruned components
// hold -infinity so they can never win a "smallest score" selection again
// while keeping the score grids rectangular.
struct ImportanceScores {
    std::vector<std::vector<double>> head_scores;  // [layer][head]
    std::vector<double> mlp_scores;                // [layer]
    size_t sample_count = 0;
};

enum class PruneMode { heads_only, mlps_only, heads_and_mlps };

std::string prune_mode_name(PruneMode mode);
PruneMode prune_mode_from_name(const std::string& name);

struct PruneConfig {
    double threshold = 0.9;   // keep pruning while dev >= threshold * full
    double fraction = 0.10;   // head share per structured step, weight share per magnitude step
    bool original_basis = false;  // magnitude fraction of the original count, not remaining
    size_t importance_samples = 0;  // cap on dev samples for scoring; 0 = all
};

struct PruneIteration {
    size_t iteration = 0;
    double surviving_fraction = 1.0;
    double dev_metric = 0.0;
    size_t masked_this_step = 0;
    SubnetworkMask subnet;  // structured loops
    WeightMask weights;     // magnitude loops
};

struct PruneTrace {
    std::vector<PruneIteration> iterations;
};

// Per-sample |dLoss/dxi| and |dLoss/dnu| averaged over the data, one backward
// pass per sample, dropout off. Components masked in `current` score -inf.
ImportanceScores importance_scores(const EncoderParams& model, const Dataset& data,
                                   TaskKind kind, const SubnetworkMask& current,
                                   size_t max_samples = 0);

// Each layer's unpruned head scores divided by their l2 norm; all-zero layers
// and MLP scores pass through unchanged.
ImportanceScores normalize_head_scores_layerwise(ImportanceScores scores);

// One pruning move on top of `current`. heads_only masks the
// ceil(fraction * total_heads) lowest-scoring live heads, mlps_only masks the
// single lowest-scoring live MLP, heads_and_mlps does both. Ties break on
// ascending (layer, head). Returns nothing when the mode has nothing left.
std::optional<SubnetworkMask> structured_prune_step(const ImportanceScores& scores,
                                                    PruneMode mode,
                                                    const SubnetworkMask& current,
                                                    double fraction = 0.10);

struct StructuredPruneResult {
    SubnetworkMask mask;
    PruneTrace trace;
    double full_metric = 0.0;
};

// score -> normalize -> prune -> dev check, reverting the move that falls
// under threshold * full. heads_and_mlps runs its joint phase, then a
// heads-only phase, then an mlps-only phase.
StructuredPruneResult structured_prune_loop(const EncoderParams& model, const Task& task,
                                            PruneMode mode, const PruneConfig& cfg);

// Masks the floor(fraction * remaining) smallest-magnitude live weights
// (at least one while any remain), pooled across all prunable tensors.
// original_basis counts fraction * total instead. Returns nothing when
// every prunable weight is already masked.
std::optional<WeightMask> magnitude_prune_step(const EncoderParams& params,
                                               const WeightMask& current, double fraction = 0.10,
                                               bool original_basis = false);

struct MagnitudePruneResult {
    WeightMask mask;
    PruneTrace trace;
    double full_metric = 0.0;
};

// Iterates magnitude steps on the already fine-tuned weights with a dev
// check per step; no retraining between iterations.
MagnitudePruneResult magnitude_prune_loop(const EncoderParams& model, const Task& task,
                                          const PruneConfig& cfg);

// Surviving-weight counts per layer and component family, plus a row for the
// shared tensors; the grand total equals the mask's surviving count.
struct BlockSurvival {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<size_t>> counts;
    size_t total() const;
};

BlockSurvival block_survival_counts(const EncoderParams& params, const WeightMask& mask);

} // namespace ticketlab
