#pragma once

#include "ticketlab/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ticketlab {

class Rng;

struct ModelConfig {
    size_t n_layers = 4;
    size_t n_heads = 4;
    size_t d_model = 32;
    size_t d_head = 8;
    size_t d_ff = 64;
    size_t vocab_size = 64;
    size_t max_seq_len = 16;
    size_t n_classes = 2;
    double dropout = 0.1;
    double ln_eps = 1e-5;

    void validate() const;  // throws std::invalid_argument on nonsense
    size_t total_heads() const { return n_layers * n_heads; }
};

// Which attention heads and MLP blocks take part in the forward pass.
// 1.0 keeps a component, 0.0 removes it entirely (its compute is skipped,
// not multiplied away).
struct SubnetworkMask {
    std::vector<std::vector<double>> heads;  // [layer][head]
    std::vector<double> mlps;                // [layer]

    static SubnetworkMask all_ones(const ModelConfig& cfg);
    static SubnetworkMask all_zeros(const ModelConfig& cfg);

    size_t total_heads() const;
    size_t surviving_heads() const;
    size_t surviving_mlps() const;
    bool head_on(size_t layer, size_t head) const { return heads[layer][head] != 0.0; }
    bool mlp_on(size_t layer) const { return mlps[layer] != 0.0; }
    bool operator==(const SubnetworkMask& other) const;
    void check_shape(const ModelConfig& cfg) const;
};

// Per-weight keep/drop bits over the prunable tensors, aligned with
// EncoderParams::prunable_tensors() order. Magnitude pruning produces these.
struct WeightMask {
    std::vector<std::pair<std::string, std::vector<uint8_t>>> bits;

    static WeightMask all_ones(const struct EncoderParams& p);
    size_t total_weights() const;
    size_t surviving_weights() const;
    double surviving_fraction() const;
    void check_congruent(const struct EncoderParams& p) const;
    bool operator==(const WeightMask& other) const { return bits == other.bits; }
};

// zeroes every masked weight in place
void apply_weight_mask(struct EncoderParams& p, const WeightMask& m);

// Mask entries lifted into graph leaves so a backward pass yields
// d(loss)/d(mask entry); used by the importance-score pass.
struct MaskTensors {
    std::vector<std::vector<Tensor>> xi;  // [layer][head] 1-element tensors
    std::vector<Tensor> nu;               // [layer]

    static MaskTensors from_mask(const SubnetworkMask& m);
    void zero_grads();
};

struct HeadParams {
    Tensor wq, wk, wv;  // d_head x d_model
    Tensor wo;          // d_model x d_head
};

struct LayerParams {
    std::vector<HeadParams> heads;
    Tensor ln1_g, ln1_b;
    Tensor ln2_g, ln2_b;
    Tensor mlp_w1, mlp_b1;  // d_ff x d_model, d_ff
    Tensor mlp_w2, mlp_b2;  // d_model x d_ff, d_model
};

struct EncoderParams {
    ModelConfig config;
    Tensor tok_emb;  // vocab x d_model
    Tensor pos_emb;  // max_seq_len x d_model
    std::vector<LayerParams> layers;
    Tensor final_ln_g, final_ln_b;
    Tensor pooler_w, pooler_b;  // d_model x d_model, d_model
    Tensor mlm_bias;            // vocab (output head ties tok_emb)
    Tensor cls_w, cls_b;        // n_classes x d_model, n_classes

    // every tensor, paired with a stable name, in a fixed order
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    // the subset magnitude pruning may touch: layer stacks, final norm, pooler
    std::vector<std::pair<std::string, Tensor>> prunable_tensors() const;
    std::vector<Tensor> all_tensors() const;

    size_t param_count() const;
    size_t prunable_param_count() const;

    EncoderParams clone() const;  // deep copy, detached from any graph
};

// weights drawn N(0, 0.02^2), biases zero, norm gains one; each tensor gets
// its own stream keyed by name so layout changes do not reshuffle the rest
EncoderParams init_params(const ModelConfig& cfg, uint64_t seed);

// fresh task head on an otherwise untouched model
void reinit_classifier(EncoderParams& p, size_t n_classes, uint64_t seed);

struct ForwardOptions {
    const SubnetworkMask* mask = nullptr;         // null means everything on
    const MaskTensors* mask_tensors = nullptr;    // importance mode; overrides `mask`
    bool training = false;                        // enables dropout
    Rng* dropout_rng = nullptr;                   // required when training with dropout > 0
    bool want_maps = false;                       // record attention probabilities
};

// Attention probabilities and the rows that produced them, detached from the
// graph. Masked heads leave empty slots since they never run.
struct AttentionRecord {
    size_t seq_len = 0;
    std::vector<std::vector<std::vector<double>>> probs;  // [layer][head], seq*seq
    std::vector<std::vector<double>> ln1;                 // [layer], seq*d_model
};

struct EncodeResult {
    Tensor hidden;  // seq x d_model, after the final norm
    Tensor pooled;  // 1 x d_model, tanh pooler over the first token
    AttentionRecord record;
};

EncodeResult encode(const EncoderParams& p, const std::vector<size_t>& tokens,
                    const ForwardOptions& opt);

// classification logits from the pooled vector, 1 x n_classes
Tensor task_logits(const EncoderParams& p, const Tensor& pooled);

// vocabulary logits at the given positions, positions.size() x vocab
Tensor mlm_logits(const EncoderParams& p, const Tensor& hidden,
                  const std::vector<size_t>& positions);

} // namespace ticketlab
