#pragma once

#include "ticketlab/analysis.hpp"
#include "ticketlab/encoder.hpp"
#include "ticketlab/pruning.hpp"
#include "ticketlab/subnet.hpp"
#include "ticketlab/tasks.hpp"
#include "ticketlab/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ticketlab {

// Everything a full run needs, bundled so one hash can vouch for any
// artifact. Paths and worker counts describe where and how fast the run
// happens, not what it computes, so they stay out of the hash.
struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;
    uint64_t suite_seed = 11;
    size_t task_train_size = 256;
    size_t task_dev_size = 64;
    size_t pretrain_size = 512;
    size_t pretrain_epochs = 32;
    PruneMode mode = PruneMode::heads_and_mlps;
    double threshold = 0.9;
    double fraction = 0.10;
    size_t importance_samples = 0;
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<std::string> tasks;  // empty means the whole suite
    std::string output_dir = "out";
    size_t workers = 1;

    void validate() const;
    PruneConfig prune_config() const;
};

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
std::string config_hash(const ExperimentConfig& cfg);  // 16 hex chars

// One stored mask plus enough provenance to refuse mismatched reuse.
struct MaskFile {
    int schema_version = 1;
    PruneMethod method = PruneMethod::structured;
    std::string task;
    uint64_t seed = 0;
    std::string config_hash;
    SubnetworkMask subnet;  // structured payload
    WeightMask weights;     // magnitude payload
};

std::string mask_to_json(const MaskFile& m);
MaskFile mask_from_json(const std::string& text);
void save_mask(const std::string& path, const MaskFile& m);
// empty expected_hash skips the provenance check
MaskFile load_mask(const std::string& path, const std::string& expected_hash = "");

// Little-endian binary checkpoint: "TLABCKP1", a JSON header with the model
// config and provenance hash, then raw doubles per named tensor.
void save_checkpoint(const std::string& path, const EncoderParams& p,
                     const std::string& config_hash);
EncoderParams load_checkpoint(const std::string& path, const std::string& expected_hash = "");

std::string record_to_json(const ExperimentRecord& r);
ExperimentRecord record_from_json(const std::string& text);

// header: iteration,surviving_fraction,dev_metric,masked_this_step
std::string trace_to_csv(const PruneTrace& trace);

// Grid with one group per cell: mean on top, std underneath when given.
// Output is a pure function of the inputs, so byte comparisons are fair.
std::string heatmap_svg(const std::vector<std::vector<double>>& mean,
                        const std::vector<std::vector<double>>* std_dev,
                        const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title);

struct BarSeries {
    std::string name;
    std::vector<double> values;  // one per group
};

std::string bar_chart_svg(const std::vector<std::string>& group_labels,
                          const std::vector<BarSeries>& series, const std::string& title);

// plain ASCII PGM, cells scaled so the hottest pixel is 255
std::string attention_pgm(const AttentionMap& map);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// locale-independent formatting so emitted artifacts are byte-stable
std::string format_fixed(double v, int precision);
std::string format_shortest(double v);

} // namespace ticketlab
