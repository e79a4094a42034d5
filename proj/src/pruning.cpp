#include "ticketlab/pruning.hpp"

#include "ticketlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace ticketlab {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

Tensor sample_loss(const EncoderParams& p, const Tensor& pooled, TaskKind kind, double label) {
    Tensor logits = task_logits(p, pooled);
    if (kind == TaskKind::classification) {
        auto cls = static_cast<size_t>(std::llround(label));
        return cross_entropy_logits(logits, {cls});
    }
    Tensor target = Tensor::from_values({1, 1}, {label});
    return mse(logits, target);
}

double structured_fraction(const SubnetworkMask& m) {
    size_t total = m.total_heads() + m.mlps.size();
    size_t alive = m.surviving_heads() + m.surviving_mlps();
    return static_cast<double>(alive) / static_cast<double>(total);
}

void check_fraction(double fraction) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("prune fraction must be in (0, 1]");
}

} // namespace

std::string prune_mode_name(PruneMode mode) {
    switch (mode) {
    case PruneMode::heads_only: return "heads_only";
    case PruneMode::mlps_only: return "mlps_only";
    case PruneMode::heads_and_mlps: return "heads_and_mlps";
    }
    throw std::logic_error("unreachable");
}

PruneMode prune_mode_from_name(const std::string& name) {
    if (name == "heads_only") return PruneMode::heads_only;
    if (name == "mlps_only") return PruneMode::mlps_only;
    if (name == "heads_and_mlps") return PruneMode::heads_and_mlps;
    throw std::invalid_argument("unknown prune mode: " + name);
}

ImportanceScores importance_scores(const EncoderParams& model, const Dataset& data,
                                   TaskKind kind, const SubnetworkMask& current,
                                   size_t max_samples) {
    if (data.size() == 0)
        throw std::invalid_argument("importance_scores needs a non-empty dev set");
    current.check_shape(model.config);

    MaskTensors lifted = MaskTensors::from_mask(current);
    ForwardOptions opt;
    opt.mask_tensors = &lifted;

    size_t n_layers = model.config.n_layers;
    size_t n_heads = model.config.n_heads;
    ImportanceScores out;
    out.head_scores.assign(n_layers, std::vector<double>(n_heads, 0.0));
    out.mlp_scores.assign(n_layers, 0.0);

    size_t n = data.size();
    if (max_samples > 0 && max_samples < n) n = max_samples;
    for (size_t i = 0; i < n; ++i) {
        EncodeResult enc = encode(model, data.sequences[i], opt);
        Tensor loss = sample_loss(model, enc.pooled, kind, data.labels[i]);
        loss.backward();
        for (size_t l = 0; l < n_layers; ++l) {
            for (size_t h = 0; h < n_heads; ++h)
                if (current.head_on(l, h))
                    out.head_scores[l][h] += std::fabs(lifted.xi[l][h].grad()[0]);
            if (current.mlp_on(l)) out.mlp_scores[l] += std::fabs(lifted.nu[l].grad()[0]);
        }
        lifted.zero_grads();
    }

    for (size_t l = 0; l < n_layers; ++l) {
        for (size_t h = 0; h < n_heads; ++h) {
            if (current.head_on(l, h))
                out.head_scores[l][h] /= static_cast<double>(n);
            else
                out.head_scores[l][h] = neg_inf;
        }
        if (current.mlp_on(l))
            out.mlp_scores[l] /= static_cast<double>(n);
        else
            out.mlp_scores[l] = neg_inf;
    }
    out.sample_count = n;
    return out;
}

ImportanceScores normalize_head_scores_layerwise(ImportanceScores scores) {
    for (auto& row : scores.head_scores) {
        double sq = 0.0;
        for (double s : row)
            if (s != neg_inf) sq += s * s;
        double norm = std::sqrt(sq);
        if (norm == 0.0) continue;
        for (double& s : row)
            if (s != neg_inf) s /= norm;
    }
    return scores;
}

std::optional<SubnetworkMask> structured_prune_step(const ImportanceScores& scores,
                                                    PruneMode mode,
                                                    const SubnetworkMask& current,
                                                    double fraction) {
    check_fraction(fraction);
    bool want_heads = mode != PruneMode::mlps_only;
    bool want_mlps = mode != PruneMode::heads_only;

    using Key = std::tuple<double, size_t, size_t>;  // score, layer, head
    std::vector<Key> live_heads;
    if (want_heads)
        for (size_t l = 0; l < current.heads.size(); ++l)
            for (size_t h = 0; h < current.heads[l].size(); ++h)
                if (current.head_on(l, h))
                    live_heads.emplace_back(scores.head_scores[l][h], l, h);

    std::vector<std::pair<double, size_t>> live_mlps;
    if (want_mlps)
        for (size_t l = 0; l < current.mlps.size(); ++l)
            if (current.mlp_on(l)) live_mlps.emplace_back(scores.mlp_scores[l], l);

    if (live_heads.empty() && live_mlps.empty()) return std::nullopt;

    SubnetworkMask next = current;
    if (!live_heads.empty()) {
        size_t quota = static_cast<size_t>(
            std::ceil(fraction * static_cast<double>(current.total_heads())));
        quota = std::min(std::max<size_t>(quota, 1), live_heads.size());
        std::sort(live_heads.begin(), live_heads.end());
        for (size_t i = 0; i < quota; ++i)
            next.heads[std::get<1>(live_heads[i])][std::get<2>(live_heads[i])] = 0.0;
    }
    if (!live_mlps.empty()) {
        auto lowest = *std::min_element(live_mlps.begin(), live_mlps.end());
        next.mlps[lowest.second] = 0.0;
    }
    return next;
}

StructuredPruneResult structured_prune_loop(const EncoderParams& model, const Task& task,
                                            PruneMode mode, const PruneConfig& cfg) {
    check_fraction(cfg.fraction);
    TaskKind kind = task.spec.kind;
    MetricKind metric = task.spec.metric;

    StructuredPruneResult out;
    out.mask = SubnetworkMask::all_ones(model.config);
    out.full_metric = evaluate(model, task.dev, kind, metric, nullptr);
    double required = cfg.threshold * out.full_metric;

    PruneIteration first;
    first.iteration = 0;
    first.surviving_fraction = 1.0;
    first.dev_metric = out.full_metric;
    first.subnet = out.mask;
    out.trace.iterations.push_back(first);

    if (out.full_metric < required) return out;

    std::vector<PruneMode> phases;
    if (mode == PruneMode::heads_and_mlps)
        phases = {PruneMode::heads_and_mlps, PruneMode::heads_only, PruneMode::mlps_only};
    else
        phases = {mode};

    size_t iter = 1;
    for (PruneMode phase : phases) {
        while (true) {
            ImportanceScores scores = normalize_head_scores_layerwise(
                importance_scores(model, task.dev, kind, out.mask, cfg.importance_samples));
            auto cand = structured_prune_step(scores, phase, out.mask, cfg.fraction);
            if (!cand) break;
            double dev = evaluate(model, task.dev, kind, metric, &*cand);
            if (dev < required) break;
            size_t before = out.mask.surviving_heads() + out.mask.surviving_mlps();
            size_t after = cand->surviving_heads() + cand->surviving_mlps();
            out.mask = *cand;
            PruneIteration it;
            it.iteration = iter++;
            it.surviving_fraction = structured_fraction(out.mask);
            it.dev_metric = dev;
            it.masked_this_step = before - after;
            it.subnet = out.mask;
            out.trace.iterations.push_back(it);
        }
    }
    return out;
}

std::optional<WeightMask> magnitude_prune_step(const EncoderParams& params,
                                               const WeightMask& current, double fraction,
                                               bool original_basis) {
    if (!(fraction > 0.0) || fraction >= 1.0)
        throw std::invalid_argument("magnitude fraction must be in (0, 1)");
    current.check_congruent(params);

    auto prunable = params.prunable_tensors();
    using Entry = std::tuple<double, size_t, size_t>;  // |value|, tensor index, flat index
    std::vector<Entry> live;
    live.reserve(current.surviving_weights());
    for (size_t t = 0; t < prunable.size(); ++t) {
        const auto& values = prunable[t].second.values();
        const auto& bits = current.bits[t].second;
        for (size_t i = 0; i < bits.size(); ++i)
            if (bits[i]) live.emplace_back(std::fabs(values[i]), t, i);
    }
    if (live.empty()) return std::nullopt;

    size_t basis = original_basis ? current.total_weights() : live.size();
    auto quota = static_cast<size_t>(std::floor(fraction * static_cast<double>(basis)));
    quota = std::min(std::max<size_t>(quota, 1), live.size());

    std::nth_element(live.begin(), live.begin() + static_cast<ptrdiff_t>(quota - 1), live.end());
    std::sort(live.begin(), live.begin() + static_cast<ptrdiff_t>(quota));

    WeightMask next = current;
    for (size_t i = 0; i < quota; ++i)
        next.bits[std::get<1>(live[i])].second[std::get<2>(live[i])] = 0;
    return next;
}

MagnitudePruneResult magnitude_prune_loop(const EncoderParams& model, const Task& task,
                                          const PruneConfig& cfg) {
    TaskKind kind = task.spec.kind;
    MetricKind metric = task.spec.metric;

    MagnitudePruneResult out;
    out.mask = WeightMask::all_ones(model);
    out.full_metric = evaluate(model, task.dev, kind, metric, nullptr);
    double required = cfg.threshold * out.full_metric;

    PruneIteration first;
    first.iteration = 0;
    first.surviving_fraction = 1.0;
    first.dev_metric = out.full_metric;
    first.weights = out.mask;
    out.trace.iterations.push_back(first);

    if (out.full_metric < required) return out;

    size_t iter = 1;
    while (true) {
        auto cand = magnitude_prune_step(model, out.mask, cfg.fraction, cfg.original_basis);
        if (!cand) break;
        EncoderParams masked = model.clone();
        apply_weight_mask(masked, *cand);
        double dev = evaluate(masked, task.dev, kind, metric, nullptr);
        if (dev < required) break;
        size_t dropped = out.mask.surviving_weights() - cand->surviving_weights();
        out.mask = *cand;
        PruneIteration it;
        it.iteration = iter++;
        it.surviving_fraction = out.mask.surviving_fraction();
        it.dev_metric = dev;
        it.masked_this_step = dropped;
        it.weights = out.mask;
        out.trace.iterations.push_back(it);
    }
    return out;
}

size_t BlockSurvival::total() const {
    size_t sum = 0;
    for (const auto& row : counts)
        for (size_t c : row) sum += c;
    return sum;
}

BlockSurvival block_survival_counts(const EncoderParams& params, const WeightMask& mask) {
    mask.check_congruent(params);
    size_t n_layers = params.config.n_layers;

    BlockSurvival out;
    for (size_t l = 0; l < n_layers; ++l) out.row_labels.push_back("layer" + std::to_string(l));
    out.row_labels.push_back("shared");
    out.col_labels = {"attention", "mlp", "norms", "pooler"};
    out.counts.assign(out.row_labels.size(), std::vector<size_t>(out.col_labels.size(), 0));

    for (const auto& [name, bits] : mask.bits) {
        size_t row = n_layers;
        size_t col = 2;
        if (name.rfind("layer", 0) == 0) {
            row = static_cast<size_t>(std::stoul(name.substr(5)));
            if (name.find(".head") != std::string::npos)
                col = 0;
            else if (name.find(".mlp.") != std::string::npos)
                col = 1;
        } else if (name.rfind("pooler.", 0) == 0) {
            col = 3;
        }
        size_t alive = 0;
        for (uint8_t b : bits) alive += b;
        out.counts[row][col] += alive;
    }
    return out;
}

} // namespace ticketlab
