#pragma once

#include "ticketlab/encoder.hpp"
#include "ticketlab/tasks.hpp"

#include <cstdint>
#include <vector>

namespace ticketlab {

struct TrainConfig {
    size_t epochs = 40;
    size_t batch_size = 8;
    double lr = 1.5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;  // global L2 gradient clip, 0 disables
    uint64_t seed = 0;       // classifier init, batch order, dropout, token masking

    void validate() const;
};

// Adam over a fixed parameter list. Gradients are read from the tensors'
// grad buffers and cleared by the caller.
class Adam {
public:
    Adam(std::vector<Tensor> params, const TrainConfig& cfg);
    void step();
    void zero_grads();
    // scales all gradients down so their global L2 norm is at most max_norm
    void clip_gradients(double max_norm);

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    uint64_t t_ = 0;
};

struct PretrainResult {
    EncoderParams model;
    double heldout_masked_accuracy = 0.0;
    double unigram_baseline = 0.0;
    std::vector<double> epoch_losses;
};

// Masked-LM pretraining: 15% of content tokens per sequence are selected
// (at least one), 80/10/10 mask/random/keep replacement, cross-entropy on
// the selected positions. The last tenth of the corpus is held out for the
// masked-accuracy report. epochs == 0 returns the input unchanged.
PretrainResult pretrain_mlm(const EncoderParams& init, const Dataset& corpus,
                            const TrainConfig& cfg);

struct FineTuneResult {
    EncoderParams model;
    double dev_metric = 0.0;
    std::vector<double> epoch_dev_metrics;
};

// Clones the checkpoint, re-initializes the task head from cfg.seed, then
// trains under the given masks. Weights dropped by weight_mask get their
// gradients zeroed before each update, so they stay exactly zero. Either
// mask pointer may be null.
FineTuneResult fine_tune(const EncoderParams& pretrained, const Task& task,
                         const TrainConfig& cfg, const SubnetworkMask* subnet_mask,
                         const WeightMask* weight_mask);

// dev-set metric of a model under an optional subnetwork mask
double evaluate(const EncoderParams& model, const Dataset& dev, TaskKind kind,
                MetricKind metric, const SubnetworkMask* subnet_mask);

// argmax class or raw regression value per sequence
std::vector<double> predict(const EncoderParams& model, const Dataset& data, TaskKind kind,
                            const SubnetworkMask* subnet_mask);

} // namespace ticketlab
