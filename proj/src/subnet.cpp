#include "ticketlab/subnet.hpp"

#include "ticketlab/metrics.hpp"
#include "ticketlab/rng.hpp"

#include <stdexcept>

namespace ticketlab {

namespace {

std::vector<size_t> pick(const std::vector<size_t>& pool, size_t k, Rng& rng) {
    std::vector<size_t> out;
    out.reserve(k);
    for (size_t i : rng.sample_without_replacement(pool.size(), k)) out.push_back(pool[i]);
    return out;
}

double subnet_fraction(const SubnetworkMask& m) {
    size_t total = m.total_heads() + m.mlps.size();
    return static_cast<double>(m.surviving_heads() + m.surviving_mlps()) /
           static_cast<double>(total);
}

} // namespace

std::string subnetwork_kind_name(SubnetworkKind kind) {
    switch (kind) {
    case SubnetworkKind::good: return "good";
    case SubnetworkKind::random: return "random";
    case SubnetworkKind::bad: return "bad";
    case SubnetworkKind::super_survivor: return "super_survivor";
    case SubnetworkKind::random_init_random_prune: return "random_init_random_prune";
    }
    throw std::logic_error("unreachable");
}

SubnetworkKind subnetwork_kind_from_name(const std::string& name) {
    if (name == "good") return SubnetworkKind::good;
    if (name == "random") return SubnetworkKind::random;
    if (name == "bad") return SubnetworkKind::bad;
    if (name == "super_survivor") return SubnetworkKind::super_survivor;
    if (name == "random_init_random_prune") return SubnetworkKind::random_init_random_prune;
    throw std::invalid_argument("unknown subnetwork kind: " + name);
}

std::string prune_method_name(PruneMethod method) {
    return method == PruneMethod::magnitude ? "m" : "s";
}

PruneMethod prune_method_from_name(const std::string& name) {
    if (name == "m") return PruneMethod::magnitude;
    if (name == "s") return PruneMethod::structured;
    throw std::invalid_argument("unknown prune method: " + name);
}

SubnetworkMask sample_random_subnetwork(const SubnetworkMask& good, Rng& rng) {
    size_t n_layers = good.heads.size();
    size_t per_layer = n_layers ? good.heads[0].size() : 0;

    SubnetworkMask out = good;
    for (auto& row : out.heads) std::fill(row.begin(), row.end(), 0.0);
    std::fill(out.mlps.begin(), out.mlps.end(), 0.0);

    for (size_t flat : rng.sample_without_replacement(n_layers * per_layer,
                                                      good.surviving_heads()))
        out.heads[flat / per_layer][flat % per_layer] = 1.0;
    for (size_t l : rng.sample_without_replacement(n_layers, good.surviving_mlps()))
        out.mlps[l] = 1.0;
    return out;
}

WeightMask sample_random_subnetwork(const WeightMask& good, Rng& rng) {
    WeightMask out = good;
    std::vector<std::vector<uint8_t>*> rows;
    for (auto& [name, bits] : out.bits) {
        std::fill(bits.begin(), bits.end(), 0);
        rows.push_back(&bits);
    }
    std::vector<size_t> offsets{0};
    for (auto* r : rows) offsets.push_back(offsets.back() + r->size());

    size_t row = 0;
    for (size_t flat : rng.sample_without_replacement(good.total_weights(),
                                                      good.surviving_weights())) {
        while (flat >= offsets[row + 1]) ++row;  // draws come back sorted
        (*rows[row])[flat - offsets[row]] = 1;
    }
    return out;
}

SubnetworkMask sample_bad_subnetwork(const SubnetworkMask& good, Rng& rng) {
    size_t n_layers = good.heads.size();
    size_t per_layer = n_layers ? good.heads[0].size() : 0;

    auto fill_category = [&](auto on, auto set, size_t total, size_t want) {
        std::vector<size_t> dropped, kept;
        for (size_t i = 0; i < total; ++i) (on(i) ? kept : dropped).push_back(i);
        std::vector<size_t> chosen;
        if (want <= dropped.size()) {
            chosen = pick(dropped, want, rng);
        } else {
            chosen = dropped;
            for (size_t i : pick(kept, want - dropped.size(), rng)) chosen.push_back(i);
        }
        for (size_t i : chosen) set(i);
    };

    SubnetworkMask out = good;
    for (auto& row : out.heads) std::fill(row.begin(), row.end(), 0.0);
    std::fill(out.mlps.begin(), out.mlps.end(), 0.0);

    fill_category([&](size_t f) { return good.head_on(f / per_layer, f % per_layer); },
                  [&](size_t f) { out.heads[f / per_layer][f % per_layer] = 1.0; },
                  n_layers * per_layer, good.surviving_heads());
    fill_category([&](size_t l) { return good.mlp_on(l); },
                  [&](size_t l) { out.mlps[l] = 1.0; }, n_layers, good.surviving_mlps());
    return out;
}

WeightMask sample_bad_subnetwork(const WeightMask& good, Rng& rng) {
    std::vector<size_t> dropped, kept;
    size_t flat = 0;
    for (const auto& [name, bits] : good.bits)
        for (uint8_t b : bits) {
            (b ? kept : dropped).push_back(flat);
            ++flat;
        }

    size_t want = good.surviving_weights();
    std::vector<size_t> chosen;
    if (want <= dropped.size()) {
        chosen = pick(dropped, want, rng);
    } else {
        chosen = dropped;
        for (size_t i : pick(kept, want - dropped.size(), rng)) chosen.push_back(i);
    }

    WeightMask out = good;
    for (auto& [name, bits] : out.bits) std::fill(bits.begin(), bits.end(), 0);
    std::vector<size_t> offsets{0};
    for (const auto& [name, bits] : out.bits) offsets.push_back(offsets.back() + bits.size());
    for (size_t f : chosen) {
        size_t row = 0;
        while (f >= offsets[row + 1]) ++row;
        out.bits[row].second[f - offsets[row]] = 1;
    }
    return out;
}

SubnetworkMask super_survivors(const std::vector<SubnetworkMask>& masks) {
    if (masks.size() < 2)
        throw std::invalid_argument("super_survivors needs at least two masks");
    SubnetworkMask out = masks.front();
    for (size_t i = 1; i < masks.size(); ++i) {
        const auto& m = masks[i];
        if (m.heads.size() != out.heads.size() || m.mlps.size() != out.mlps.size())
            throw std::invalid_argument("super_survivors mask shapes differ");
        for (size_t l = 0; l < out.heads.size(); ++l) {
            if (m.heads[l].size() != out.heads[l].size())
                throw std::invalid_argument("super_survivors mask shapes differ");
            for (size_t h = 0; h < out.heads[l].size(); ++h)
                out.heads[l][h] = (out.head_on(l, h) && m.head_on(l, h)) ? 1.0 : 0.0;
            out.mlps[l] = (out.mlp_on(l) && m.mlp_on(l)) ? 1.0 : 0.0;
        }
    }
    return out;
}

ExperimentRecord run_subnetwork(const EncoderParams& pretrained, const EncoderParams& fine_tuned,
                                const Task& task, uint64_t seed, PruneMethod method,
                                SubnetworkKind kind, const SubnetworkMask* subnet,
                                const WeightMask* weights, const TrainConfig& base_cfg) {
    if (method == PruneMethod::structured && subnet == nullptr)
        throw std::invalid_argument("structured run needs a subnetwork mask");
    if (method == PruneMethod::magnitude && weights == nullptr)
        throw std::invalid_argument("magnitude run needs a weight mask");

    ExperimentRecord rec;
    rec.task = task.spec.name;
    rec.seed = seed;
    rec.method = method;
    rec.kind = kind;

    TaskKind tk = task.spec.kind;
    MetricKind metric = task.spec.metric;
    if (method == PruneMethod::structured) {
        rec.subnet = *subnet;
        rec.size_fraction = subnet_fraction(*subnet);
        rec.pruned_metric = evaluate(fine_tuned, task.dev, tk, metric, subnet);
    } else {
        rec.weights = *weights;
        rec.size_fraction = weights->surviving_fraction();
        EncoderParams masked = fine_tuned.clone();
        apply_weight_mask(masked, *weights);
        rec.pruned_metric = evaluate(masked, task.dev, tk, metric, nullptr);
    }

    TrainConfig cfg = base_cfg;
    cfg.seed = seed;
    FineTuneResult ft = fine_tune(pretrained, task, cfg,
                                  method == PruneMethod::structured ? subnet : nullptr,
                                  method == PruneMethod::magnitude ? weights : nullptr);
    rec.retrained_metric = ft.dev_metric;
    rec.retrained = true;
    return rec;
}

ExperimentRecord lth_experiment(const EncoderParams& pretrained, const EncoderParams& fine_tuned,
                                const Task& task, uint64_t seed, PruneMethod method,
                                SubnetworkKind kind, const SubnetworkMask* good_subnet,
                                const WeightMask* good_weights, const TrainConfig& base_cfg) {
    if (kind != SubnetworkKind::good && kind != SubnetworkKind::random &&
        kind != SubnetworkKind::bad)
        throw std::invalid_argument("lth_experiment handles good/random/bad kinds");
    if (method == PruneMethod::structured && good_subnet == nullptr)
        throw std::invalid_argument("good subnetwork mask not found for this task and seed");
    if (method == PruneMethod::magnitude && good_weights == nullptr)
        throw std::invalid_argument("good weight mask not found for this task and seed");

    Rng rng = Rng(seed)
                  .split(task.spec.name)
                  .split(prune_method_name(method))
                  .split(subnetwork_kind_name(kind));

    if (method == PruneMethod::structured) {
        SubnetworkMask mask = *good_subnet;
        if (kind == SubnetworkKind::random) mask = sample_random_subnetwork(*good_subnet, rng);
        if (kind == SubnetworkKind::bad) mask = sample_bad_subnetwork(*good_subnet, rng);
        return run_subnetwork(pretrained, fine_tuned, task, seed, method, kind, &mask, nullptr,
                              base_cfg);
    }
    WeightMask mask = *good_weights;
    if (kind == SubnetworkKind::random) mask = sample_random_subnetwork(*good_weights, rng);
    if (kind == SubnetworkKind::bad) mask = sample_bad_subnetwork(*good_weights, rng);
    return run_subnetwork(pretrained, fine_tuned, task, seed, method, kind, nullptr, &mask,
                          base_cfg);
}

ExperimentRecord random_init_baseline(const ModelConfig& cfg, const Task& task, uint64_t seed,
                                      const SubnetworkMask& size_reference,
                                      const TrainConfig& base_cfg) {
    uint64_t init_seed = hash_combine(seed, fnv1a64("random_init:" + task.spec.name));
    ModelConfig head_cfg = cfg;
    head_cfg.n_classes = (task.spec.kind == TaskKind::regression) ? 1 : task.spec.n_classes;
    EncoderParams fresh = init_params(head_cfg, init_seed);

    Rng rng = Rng(seed).split(task.spec.name).split("random_init_mask");
    SubnetworkMask mask = sample_random_subnetwork(size_reference, rng);

    ExperimentRecord rec;
    rec.task = task.spec.name;
    rec.seed = seed;
    rec.method = PruneMethod::structured;
    rec.kind = SubnetworkKind::random_init_random_prune;
    rec.subnet = mask;
    rec.size_fraction = subnet_fraction(mask);
    rec.pruned_metric = evaluate(fresh, task.dev, task.spec.kind, task.spec.metric, &mask);

    TrainConfig tc = base_cfg;
    tc.seed = seed;
    FineTuneResult ft = fine_tune(fresh, task, tc, &mask, nullptr);
    rec.retrained_metric = ft.dev_metric;
    rec.retrained = true;
    return rec;
}

bool success_criterion(double retrained_metric, const std::vector<double>& full_metrics_per_seed) {
    if (full_metrics_per_seed.size() < 2)
        throw std::invalid_argument("success criterion needs at least two full-model seeds");
    double m = mean(full_metrics_per_seed);
    double s = sample_std(full_metrics_per_seed);
    return retrained_metric >= m - s;
}

} // namespace ticketlab
