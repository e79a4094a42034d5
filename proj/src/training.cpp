#include "ticketlab/training.hpp"

#include "ticketlab/metrics.hpp"
#include "ticketlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ticketlab {

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("train config: betas must lie in [0, 1)");
    if (adam_eps <= 0.0) throw std::invalid_argument("train config: adam_eps must be positive");
    if (clip_norm < 0.0 || !std::isfinite(clip_norm))
        throw std::invalid_argument("train config: clip_norm must be finite and >= 0");
}

Adam::Adam(std::vector<Tensor> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.lr),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) continue;  // never touched by any graph, e.g. masked heads
        const std::vector<double>& g = p.grad();
        std::vector<double>& vals = p.values();
        for (size_t j = 0; j < vals.size(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            vals[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grads() {
    for (Tensor& p : params_) p.zero_grad();
}

void Adam::clip_gradients(double max_norm) {
    double sq = 0.0;
    for (Tensor& p : params_) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (Tensor& p : params_) {
        if (!p.has_grad()) continue;
        for (double& g : p.grad()) g *= scale;
    }
}

namespace {

// drop gradients of masked-out weights so the update leaves them at zero
void mask_gradients(EncoderParams& model, const WeightMask& wm) {
    auto prunable = model.prunable_tensors();
    for (size_t i = 0; i < wm.bits.size(); ++i) {
        Tensor t = prunable[i].second;
        if (!t.has_grad()) continue;
        const auto& b = wm.bits[i].second;
        for (size_t j = 0; j < b.size(); ++j)
            if (!b[j]) t.grad()[j] = 0.0;
    }
}

Tensor sample_loss(const EncoderParams& model, const std::vector<size_t>& seq, double label,
                   TaskKind kind, const ForwardOptions& opt) {
    EncodeResult enc = encode(model, seq, opt);
    Tensor logits = task_logits(model, enc.pooled);
    if (kind == TaskKind::classification)
        return cross_entropy_logits(logits, {static_cast<size_t>(label)});
    return mse(logits, Tensor::from_values({1, 1}, {label}));
}

} // namespace

std::vector<double> predict(const EncoderParams& model, const Dataset& data, TaskKind kind,
                            const SubnetworkMask* subnet_mask) {
    ForwardOptions opt;
    opt.mask = subnet_mask;
    std::vector<double> preds;
    preds.reserve(data.size());
    for (const auto& seq : data.sequences) {
        EncodeResult enc = encode(model, seq, opt);
        Tensor logits = task_logits(model, enc.pooled);
        if (kind == TaskKind::regression) {
            preds.push_back(logits.value());
        } else {
            size_t best = 0;
            for (size_t c = 1; c < logits.cols(); ++c)
                if (logits.at(0, c) > logits.at(0, best)) best = c;
            preds.push_back(static_cast<double>(best));
        }
    }
    return preds;
}

double evaluate(const EncoderParams& model, const Dataset& dev, TaskKind kind,
                MetricKind metric, const SubnetworkMask* subnet_mask) {
    std::vector<double> preds = predict(model, dev, kind, subnet_mask);
    switch (metric) {
        case MetricKind::accuracy: return accuracy(preds, dev.labels);
        case MetricKind::matthews: return matthews_corr(preds, dev.labels);
        case MetricKind::pearson: return pearson_corr(preds, dev.labels);
    }
    throw std::logic_error("evaluate: unhandled metric");
}

FineTuneResult fine_tune(const EncoderParams& pretrained, const Task& task,
                         const TrainConfig& cfg, const SubnetworkMask* subnet_mask,
                         const WeightMask* weight_mask) {
    cfg.validate();
    if (cfg.epochs == 0) throw std::invalid_argument("fine_tune: epochs must be >= 1");
    if (task.train.size() == 0) throw std::invalid_argument("fine_tune: empty train set");
    if (subnet_mask) subnet_mask->check_shape(pretrained.config);

    FineTuneResult res;
    res.model = pretrained.clone();
    const size_t head_classes =
        (task.spec.kind == TaskKind::regression) ? 1 : task.spec.n_classes;
    reinit_classifier(res.model, head_classes, cfg.seed);
    if (weight_mask) apply_weight_mask(res.model, *weight_mask);

    Adam adam(res.model.all_tensors(), cfg);
    Rng root(cfg.seed);
    Rng order_rng = root.split("batch_order");
    Rng drop_rng = root.split("dropout");

    ForwardOptions opt;
    opt.mask = subnet_mask;
    opt.training = true;
    opt.dropout_rng = &drop_rng;

    std::vector<size_t> perm(task.train.size());
    std::iota(perm.begin(), perm.end(), 0);
    size_t iteration = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(perm);
        for (size_t start = 0; start < perm.size(); start += cfg.batch_size) {
            const size_t stop = std::min(start + cfg.batch_size, perm.size());
            adam.zero_grads();
            for (size_t k = start; k < stop; ++k) {
                const size_t ix = perm[k];
                Tensor loss = sample_loss(res.model, task.train.sequences[ix],
                                          task.train.labels[ix], task.spec.kind, opt);
                if (!std::isfinite(loss.value()))
                    throw std::runtime_error("fine_tune: non-finite loss at iteration " +
                                             std::to_string(iteration));
                loss.backward();
                ++iteration;
            }
            if (weight_mask) mask_gradients(res.model, *weight_mask);
            if (cfg.clip_norm > 0.0) adam.clip_gradients(cfg.clip_norm);
            adam.step();
            if (weight_mask) apply_weight_mask(res.model, *weight_mask);
        }
        res.epoch_dev_metrics.push_back(
            evaluate(res.model, task.dev, task.spec.kind, task.spec.metric, subnet_mask));
    }
    res.dev_metric = res.epoch_dev_metrics.back();
    return res;
}

// ---- masked-LM pretraining --------------------------------------------------

namespace {

struct MaskedSample {
    std::vector<size_t> corrupted;
    std::vector<size_t> positions;
    std::vector<size_t> targets;
};

// 15% selection over content tokens, at least one; 80/10/10 replacement
MaskedSample mask_sequence(const std::vector<size_t>& seq, Rng& rng, bool always_mask_token) {
    MaskedSample out;
    out.corrupted = seq;
    std::vector<size_t> eligible;
    for (size_t i = 0; i < seq.size(); ++i)
        if (seq[i] >= vocab::FIRST_CONTENT) eligible.push_back(i);
    if (eligible.empty()) return out;

    for (size_t pos : eligible)
        if (rng.bernoulli(0.15)) out.positions.push_back(pos);
    if (out.positions.empty()) out.positions.push_back(eligible[rng.index(eligible.size())]);

    for (size_t pos : out.positions) {
        out.targets.push_back(seq[pos]);
        if (always_mask_token) {
            out.corrupted[pos] = vocab::MASK;
            continue;
        }
        const double u = rng.uniform();
        if (u < 0.8)
            out.corrupted[pos] = vocab::MASK;
        else if (u < 0.9)
            out.corrupted[pos] = vocab::FIRST_CONTENT + rng.index(60);
        // else keep the original token
    }
    return out;
}

} // namespace

PretrainResult pretrain_mlm(const EncoderParams& init, const Dataset& corpus,
                            const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.size() < 10) throw std::invalid_argument("pretrain_mlm: corpus too small");

    PretrainResult res;
    res.model = init.clone();

    const size_t heldout = std::max<size_t>(1, corpus.size() / 10);
    const size_t train_n = corpus.size() - heldout;

    Rng root(cfg.seed);
    Rng order_rng = root.split("batch_order");
    Rng drop_rng = root.split("dropout");
    Rng mask_rng = root.split("token_mask");

    Adam adam(res.model.all_tensors(), cfg);
    ForwardOptions opt;
    opt.training = true;
    opt.dropout_rng = &drop_rng;

    std::vector<size_t> perm(train_n);
    std::iota(perm.begin(), perm.end(), 0);
    size_t iteration = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(perm);
        double epoch_loss = 0.0;
        size_t counted = 0;
        for (size_t start = 0; start < perm.size(); start += cfg.batch_size) {
            const size_t stop = std::min(start + cfg.batch_size, perm.size());
            adam.zero_grads();
            for (size_t k = start; k < stop; ++k) {
                MaskedSample ms = mask_sequence(corpus.sequences[perm[k]], mask_rng, false);
                if (ms.positions.empty()) continue;
                EncodeResult enc = encode(res.model, ms.corrupted, opt);
                Tensor logits = mlm_logits(res.model, enc.hidden, ms.positions);
                Tensor loss = cross_entropy_logits(logits, ms.targets);
                if (!std::isfinite(loss.value()))
                    throw std::runtime_error("pretrain_mlm: non-finite loss at iteration " +
                                             std::to_string(iteration));
                epoch_loss += loss.value();
                ++counted;
                loss.backward();
                ++iteration;
            }
            if (cfg.clip_norm > 0.0) adam.clip_gradients(cfg.clip_norm);
            adam.step();
        }
        res.epoch_losses.push_back(counted ? epoch_loss / static_cast<double>(counted) : 0.0);
    }

    // held-out masked-token accuracy vs. the corpus-unigram baseline
    std::vector<size_t> token_counts(vocab::SIZE, 0);
    for (size_t i = 0; i < train_n; ++i)
        for (size_t t : corpus.sequences[i])
            if (t >= vocab::FIRST_CONTENT) token_counts[t]++;
    size_t top_token =
        std::max_element(token_counts.begin(), token_counts.end()) - token_counts.begin();

    Rng eval_rng = Rng(cfg.seed).split("eval_mask");
    size_t hits = 0, base_hits = 0, total = 0;
    ForwardOptions eval_opt;
    for (size_t i = train_n; i < corpus.size(); ++i) {
        MaskedSample ms = mask_sequence(corpus.sequences[i], eval_rng, true);
        if (ms.positions.empty()) continue;
        EncodeResult enc = encode(res.model, ms.corrupted, eval_opt);
        Tensor logits = mlm_logits(res.model, enc.hidden, ms.positions);
        for (size_t r = 0; r < ms.positions.size(); ++r) {
            size_t best = 0;
            for (size_t c = 1; c < logits.cols(); ++c)
                if (logits.at(r, c) > logits.at(r, best)) best = c;
            hits += (best == ms.targets[r]);
            base_hits += (top_token == ms.targets[r]);
            ++total;
        }
    }
    if (total) {
        res.heldout_masked_accuracy = static_cast<double>(hits) / static_cast<double>(total);
        res.unigram_baseline = static_cast<double>(base_hits) / static_cast<double>(total);
    }
    return res;
}

} // namespace ticketlab
