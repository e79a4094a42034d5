#include "doctest.h"

#include "ticketlab/encoder.hpp"
#include "ticketlab/pruning.hpp"
#include "ticketlab/rng.hpp"
#include "ticketlab/tasks.hpp"
#include "ticketlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>
#include <vector>

using namespace ticketlab;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_head = 4;
    cfg.d_ff = 16;
    cfg.vocab_size = 12;
    cfg.max_seq_len = 6;
    cfg.dropout = 0.0;
    return cfg;
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_head = 8;
    cfg.d_ff = 32;
    cfg.vocab_size = 64;
    cfg.max_seq_len = 16;
    cfg.dropout = 0.1;
    return cfg;
}

// Init weights sit at sigma 0.02 where several gradient paths are near the
// round-off floor; a generic point keeps every sensitivity testable.
void perturb_params(EncoderParams& p, uint64_t seed) {
    Rng rng(seed);
    for (auto& t : p.all_tensors())
        for (size_t i = 0; i < t.size(); ++i) t.node()->values[i] += rng.normal(0.0, 0.3);
}

Dataset toy_data(size_t n, uint64_t seed) {
    Rng rng(seed);
    Dataset d;
    for (size_t i = 0; i < n; ++i) {
        std::vector<size_t> seq{vocab::BOS};
        for (size_t j = 0; j < 4; ++j) seq.push_back(4 + rng.index(8));
        seq.push_back(vocab::EOS);
        d.sequences.push_back(std::move(seq));
        d.labels.push_back(static_cast<double>(rng.index(2)));
    }
    return d;
}

double masked_loss(const EncoderParams& p, const std::vector<size_t>& seq, double label,
                   const MaskTensors& mt) {
    ForwardOptions opt;
    opt.mask_tensors = &mt;
    EncodeResult enc = encode(p, seq, opt);
    Tensor logits = task_logits(p, enc.pooled);
    auto cls = static_cast<size_t>(std::llround(label));
    return cross_entropy_logits(logits, {cls}).value();
}

bool subnet_subset(const SubnetworkMask& inner, const SubnetworkMask& outer) {
    for (size_t l = 0; l < inner.heads.size(); ++l) {
        for (size_t h = 0; h < inner.heads[l].size(); ++h)
            if (inner.head_on(l, h) && !outer.head_on(l, h)) return false;
        if (inner.mlp_on(l) && !outer.mlp_on(l)) return false;
    }
    return true;
}

bool weight_subset(const WeightMask& inner, const WeightMask& outer) {
    for (size_t t = 0; t < inner.bits.size(); ++t)
        for (size_t i = 0; i < inner.bits[t].second.size(); ++i)
            if (inner.bits[t].second[i] && !outer.bits[t].second[i]) return false;
    return true;
}

} // namespace

TEST_CASE("importance scores match one-sided mask perturbation") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 11);
    perturb_params(p, 12);
    Dataset data = toy_data(8, 13);
    SubnetworkMask ones = SubnetworkMask::all_ones(cfg);

    ImportanceScores scores =
        importance_scores(p, data, TaskKind::classification, ones);
    CHECK(scores.sample_count == data.size());

    const double eps = 1e-4;
    MaskTensors mt = MaskTensors::from_mask(ones);
    auto fd_score = [&](Tensor knob) {
        double acc = 0.0;
        for (size_t i = 0; i < data.size(); ++i) {
            double base = masked_loss(p, data.sequences[i], data.labels[i], mt);
            knob.node()->values[0] = 1.0 - eps;
            double moved = masked_loss(p, data.sequences[i], data.labels[i], mt);
            knob.node()->values[0] = 1.0;
            acc += std::fabs(base - moved) / eps;
        }
        return acc / static_cast<double>(data.size());
    };

    for (size_t l = 0; l < cfg.n_layers; ++l) {
        for (size_t h = 0; h < cfg.n_heads; ++h) {
            double fd = fd_score(mt.xi[l][h]);
            double an = scores.head_scores[l][h];
            CHECK(std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-12}) < 1e-3);
        }
        double fd = fd_score(mt.nu[l]);
        double an = scores.mlp_scores[l];
        CHECK(std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-12}) < 1e-3);
    }
}

TEST_CASE("opposite-sign raw sensitivities still score positive") {
    ModelConfig cfg = toy_config();
    Dataset data = toy_data(1, 31);
    SubnetworkMask ones = SubnetworkMask::all_ones(cfg);

    bool found = false;
    for (uint64_t seed = 0; seed < 10 && !found; ++seed) {
        EncoderParams p = init_params(cfg, 100 + seed);
        perturb_params(p, 200 + seed);

        MaskTensors mt = MaskTensors::from_mask(ones);
        ForwardOptions opt;
        opt.mask_tensors = &mt;
        EncodeResult enc = encode(p, data.sequences[0], opt);
        auto cls = static_cast<size_t>(std::llround(data.labels[0]));
        cross_entropy_logits(task_logits(p, enc.pooled), {cls}).backward();

        std::vector<double> raw;
        for (size_t l = 0; l < cfg.n_layers; ++l)
            for (size_t h = 0; h < cfg.n_heads; ++h) raw.push_back(mt.xi[l][h].grad()[0]);
        double lo = *std::min_element(raw.begin(), raw.end());
        double hi = *std::max_element(raw.begin(), raw.end());
        if (!(lo < 0.0 && hi > 0.0)) continue;
        found = true;

        ImportanceScores scores =
            importance_scores(p, data, TaskKind::classification, ones);
        for (size_t l = 0; l < cfg.n_layers; ++l)
            for (size_t h = 0; h < cfg.n_heads; ++h)
                CHECK(scores.head_scores[l][h] > 0.0);
    }
    CHECK(found);
}

TEST_CASE("head with zero value projection has exactly zero importance") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 17);
    perturb_params(p, 18);
    auto& wv = p.layers[0].heads[1].wv;
    for (size_t i = 0; i < wv.size(); ++i) wv.node()->values[i] = 0.0;

    Dataset data = toy_data(4, 19);
    ImportanceScores scores = importance_scores(p, data, TaskKind::classification,
                                                SubnetworkMask::all_ones(cfg));
    CHECK(scores.head_scores[0][1] == 0.0);
    CHECK(scores.head_scores[0][0] > 0.0);
}

TEST_CASE("mask sensitivity equals inner product with downstream gradient") {
    Rng rng(7);
    Tensor h1 = Tensor::randn({3, 4}, rng, 0.5);
    Tensor h2 = Tensor::randn({3, 4}, rng, 0.5);
    Tensor w = Tensor::randn({4, 2}, rng, 0.5);
    Tensor xi1 = Tensor::scalar(1.0, true);
    Tensor xi2 = Tensor::scalar(1.0, true);

    auto downstream = [&](const Tensor& s) { return mean_all(gelu(matmul(s, w))); };
    Tensor mixed = add(mul_scalar(h1, xi1), mul_scalar(h2, xi2));
    downstream(mixed).backward();

    Tensor lifted = Tensor::from_values({3, 4}, mixed.values(), true);
    downstream(lifted).backward();

    double inner1 = 0.0, inner2 = 0.0;
    for (size_t i = 0; i < h1.size(); ++i) {
        inner1 += h1.values()[i] * lifted.grad()[i];
        inner2 += h2.values()[i] * lifted.grad()[i];
    }
    CHECK(std::fabs(xi1.grad()[0] - inner1) < 1e-10);
    CHECK(std::fabs(xi2.grad()[0] - inner2) < 1e-10);
}

TEST_CASE("empty dev set is rejected") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 3);
    Dataset empty;
    CHECK_THROWS_AS(importance_scores(p, empty, TaskKind::classification,
                                      SubnetworkMask::all_ones(cfg)),
                    std::invalid_argument);
}

TEST_CASE("layer-wise normalization") {
    ImportanceScores s;
    s.head_scores = {{3.0, 4.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0}, {-inf, 3.0, 4.0, 0.0}};
    s.mlp_scores = {5.0, 7.0, 9.0};
    ImportanceScores n = normalize_head_scores_layerwise(s);

    CHECK(n.head_scores[0][0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n.head_scores[0][1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(n.head_scores[0][2] == 0.0);
    CHECK(n.head_scores[1] == std::vector<double>{0.0, 0.0, 0.0, 0.0});
    CHECK(n.head_scores[2][0] == -inf);
    CHECK(n.head_scores[2][1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n.head_scores[2][2] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(n.mlp_scores == std::vector<double>{5.0, 7.0, 9.0});
}

TEST_CASE("structured step masks the quota of lowest-scoring components") {
    ModelConfig cfg;  // defaults: 4 layers, 4 heads
    SubnetworkMask ones = SubnetworkMask::all_ones(cfg);

    ImportanceScores s;
    s.head_scores.assign(4, std::vector<double>(4, 0.0));
    double v = 1.0;
    for (auto& row : s.head_scores)
        for (auto& x : row) x = v++;
    s.head_scores[2][3] = 0.01;  // global minimum
    s.head_scores[1][2] = 0.02;  // runner-up
    s.mlp_scores = {0.5, 0.4, 0.9, 0.6};

    SUBCASE("heads_only picks ceil(10% of 16) = 2") {
        auto next = structured_prune_step(s, PruneMode::heads_only, ones);
        REQUIRE(next.has_value());
        CHECK(next->surviving_heads() == 14);
        CHECK(!next->head_on(2, 3));
        CHECK(!next->head_on(1, 2));
        CHECK(next->surviving_mlps() == 4);
    }
    SUBCASE("mlps_only masks exactly one") {
        auto next = structured_prune_step(s, PruneMode::mlps_only, ones);
        REQUIRE(next.has_value());
        CHECK(next->surviving_heads() == 16);
        CHECK(next->surviving_mlps() == 3);
        CHECK(!next->mlp_on(1));
    }
    SUBCASE("heads_and_mlps does both in one move") {
        auto next = structured_prune_step(s, PruneMode::heads_and_mlps, ones);
        REQUIRE(next.has_value());
        CHECK(next->surviving_heads() == 14);
        CHECK(next->surviving_mlps() == 3);
    }
    SUBCASE("ties break on ascending layer then head") {
        ImportanceScores flat;
        flat.head_scores.assign(4, std::vector<double>(4, 0.5));
        flat.mlp_scores.assign(4, 0.5);
        auto next = structured_prune_step(flat, PruneMode::heads_and_mlps, ones);
        REQUIRE(next.has_value());
        CHECK(!next->head_on(0, 0));
        CHECK(!next->head_on(0, 1));
        CHECK(next->head_on(0, 2));
        CHECK(!next->mlp_on(0));
    }
}

TEST_CASE("structured step exhaustion and monotonicity") {
    ModelConfig cfg = toy_config();
    SubnetworkMask none = SubnetworkMask::all_zeros(cfg);
    ImportanceScores s;
    s.head_scores.assign(2, std::vector<double>(2, -inf));
    s.mlp_scores.assign(2, -inf);

    CHECK(!structured_prune_step(s, PruneMode::heads_only, none).has_value());
    CHECK(!structured_prune_step(s, PruneMode::mlps_only, none).has_value());
    CHECK(!structured_prune_step(s, PruneMode::heads_and_mlps, none).has_value());

    SubnetworkMask ones = SubnetworkMask::all_ones(cfg);
    ImportanceScores live;
    live.head_scores = {{0.1, 0.2}, {0.3, 0.4}};
    live.mlp_scores = {0.6, 0.5};
    SubnetworkMask current = ones;
    while (true) {
        auto next = structured_prune_step(live, PruneMode::heads_and_mlps, current);
        if (!next) break;
        CHECK(subnet_subset(*next, current));
        size_t before = current.surviving_heads() + current.surviving_mlps();
        size_t after = next->surviving_heads() + next->surviving_mlps();
        CHECK(after < before);
        current = *next;
        for (auto& row : live.head_scores)
            for (auto& x : row) x = 0.1;  // stale scores must not resurrect anything
    }
    CHECK(current.surviving_heads() == 0);
    CHECK(current.surviving_mlps() == 0);
}

TEST_CASE("magnitude step agrees with an independent global sort") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 23);
    perturb_params(p, 24);
    WeightMask ones = WeightMask::all_ones(p);

    auto prunable = p.prunable_tensors();
    using Entry = std::tuple<double, size_t, size_t>;
    std::vector<Entry> order;
    for (size_t t = 0; t < prunable.size(); ++t) {
        const auto& vals = prunable[t].second.values();
        for (size_t i = 0; i < vals.size(); ++i) order.emplace_back(std::fabs(vals[i]), t, i);
    }
    std::sort(order.begin(), order.end());
    size_t k = static_cast<size_t>(std::floor(0.1 * static_cast<double>(order.size())));

    auto next = magnitude_prune_step(p, ones);
    REQUIRE(next.has_value());
    CHECK(next->surviving_weights() == ones.total_weights() - k);
    for (size_t i = 0; i < k; ++i)
        CHECK(next->bits[std::get<1>(order[i])].second[std::get<2>(order[i])] == 0);
    for (size_t i = k; i < order.size(); ++i)
        CHECK(next->bits[std::get<1>(order[i])].second[std::get<2>(order[i])] == 1);
}

TEST_CASE("magnitude step arithmetic on a 100-weight remainder") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 29);
    perturb_params(p, 30);
    WeightMask m = WeightMask::all_ones(p);

    size_t live = 100;
    size_t seen = 0;
    for (auto& [name, bits] : m.bits)
        for (auto& b : bits) b = (seen++ < live) ? 1 : 0;
    REQUIRE(m.surviving_weights() == 100);

    auto step1 = magnitude_prune_step(p, m);
    REQUIRE(step1.has_value());
    CHECK(step1->surviving_weights() == 90);
    auto step2 = magnitude_prune_step(p, *step1);
    REQUIRE(step2.has_value());
    CHECK(step2->surviving_weights() == 81);
    CHECK(weight_subset(*step2, *step1));
    CHECK(weight_subset(*step1, m));

    SUBCASE("a step always removes at least one weight") {
        WeightMask few = WeightMask::all_ones(p);
        seen = 0;
        for (auto& [name, bits] : few.bits)
            for (auto& b : bits) b = (seen++ < 5) ? 1 : 0;
        auto next = magnitude_prune_step(p, few);
        REQUIRE(next.has_value());
        CHECK(next->surviving_weights() == 4);
    }
    SUBCASE("exhausted mask signals instead of stepping") {
        WeightMask dead = WeightMask::all_ones(p);
        for (auto& [name, bits] : dead.bits) std::fill(bits.begin(), bits.end(), 0);
        CHECK(!magnitude_prune_step(p, dead).has_value());
    }
}

TEST_CASE("original-basis magnitude steps keep a fixed quota") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 37);
    perturb_params(p, 38);
    WeightMask ones = WeightMask::all_ones(p);
    size_t total = ones.total_weights();
    size_t quota = static_cast<size_t>(std::floor(0.1 * static_cast<double>(total)));

    auto a = magnitude_prune_step(p, ones, 0.1, true);
    REQUIRE(a.has_value());
    auto b = magnitude_prune_step(p, *a, 0.1, true);
    REQUIRE(b.has_value());
    CHECK(a->surviving_weights() == total - quota);
    CHECK(b->surviving_weights() == total - 2 * quota);

    auto remaining = magnitude_prune_step(p, *a, 0.1, false);
    REQUIRE(remaining.has_value());
    CHECK(remaining->surviving_weights() ==
          total - quota -
              static_cast<size_t>(std::floor(0.1 * static_cast<double>(total - quota))));
}

TEST_CASE("magnitude pruning hits planted zeros first and skips embeddings") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 41);
    perturb_params(p, 42);
    p.layers[0].heads[0].wq.node()->values[0] = 0.0;

    WeightMask ones = WeightMask::all_ones(p);
    for (const auto& [name, bits] : ones.bits) {
        CHECK(name != "tok_emb");
        CHECK(name != "pos_emb");
        CHECK(name != "mlm_bias");
        CHECK(name.rfind("cls.", 0) != 0);
    }

    auto next = magnitude_prune_step(p, ones);
    REQUIRE(next.has_value());
    CHECK(next->bits[0].first == "layer0.head0.wq");
    CHECK(next->bits[0].second[0] == 0);

    CHECK_THROWS_AS(magnitude_prune_step(p, ones, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(magnitude_prune_step(p, ones, 1.0), std::invalid_argument);
}

TEST_CASE("magnitude loop honors threshold and keeps masks nested") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 5, 48, 24);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 9;
    EncoderParams model = fine_tune(init_params(cfg, 1), task, tc, nullptr, nullptr).model;

    PruneConfig pc;
    MagnitudePruneResult res = magnitude_prune_loop(model, task, pc);
    REQUIRE(!res.trace.iterations.empty());

    const auto& first = res.trace.iterations.front();
    CHECK(first.iteration == 0);
    CHECK(first.surviving_fraction == 1.0);
    CHECK(first.dev_metric == res.full_metric);
    CHECK(first.weights == WeightMask::all_ones(model));

    double required = pc.threshold * res.full_metric;
    for (size_t i = 1; i < res.trace.iterations.size(); ++i) {
        const auto& prev = res.trace.iterations[i - 1];
        const auto& cur = res.trace.iterations[i];
        CHECK(cur.iteration == i);
        CHECK(cur.surviving_fraction < prev.surviving_fraction);
        CHECK(cur.dev_metric >= required);
        CHECK(cur.masked_this_step > 0);
        CHECK(weight_subset(cur.weights, prev.weights));
    }
    CHECK(res.mask == res.trace.iterations.back().weights);
    CHECK(res.trace.iterations.size() > 1);

    MagnitudePruneResult rerun = magnitude_prune_loop(model, task, pc);
    CHECK(rerun.trace.iterations.size() == res.trace.iterations.size());
    CHECK(rerun.mask == res.mask);
    for (size_t i = 0; i < res.trace.iterations.size(); ++i)
        CHECK(rerun.trace.iterations[i].dev_metric == res.trace.iterations[i].dev_metric);
}

TEST_CASE("magnitude loop limit thresholds") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 6, 32, 16);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 10;
    EncoderParams model = fine_tune(init_params(cfg, 2), task, tc, nullptr, nullptr).model;

    PruneConfig high;
    high.threshold = 1.01;
    MagnitudePruneResult kept = magnitude_prune_loop(model, task, high);
    CHECK(kept.trace.iterations.size() == 1);
    CHECK(kept.mask == WeightMask::all_ones(model));

    PruneConfig zero;
    zero.threshold = 0.0;
    MagnitudePruneResult gone = magnitude_prune_loop(model, task, zero);
    CHECK(gone.mask.surviving_weights() == 0);
    CHECK(gone.trace.iterations.back().surviving_fraction == 0.0);
}

TEST_CASE("structured loop honors threshold across phases") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 7, 48, 24);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 11;
    EncoderParams model = fine_tune(init_params(cfg, 3), task, tc, nullptr, nullptr).model;

    PruneConfig pc;
    StructuredPruneResult res = structured_prune_loop(model, task, PruneMode::heads_and_mlps, pc);
    REQUIRE(!res.trace.iterations.empty());
    CHECK(res.trace.iterations.front().subnet == SubnetworkMask::all_ones(cfg));
    CHECK(res.trace.iterations.front().dev_metric == res.full_metric);

    double required = pc.threshold * res.full_metric;
    for (size_t i = 1; i < res.trace.iterations.size(); ++i) {
        const auto& prev = res.trace.iterations[i - 1];
        const auto& cur = res.trace.iterations[i];
        CHECK(cur.dev_metric >= required);
        CHECK(cur.surviving_fraction < prev.surviving_fraction);
        CHECK(cur.masked_this_step > 0);
        CHECK(subnet_subset(cur.subnet, prev.subnet));
    }
    CHECK(res.mask == res.trace.iterations.back().subnet);

    StructuredPruneResult rerun =
        structured_prune_loop(model, task, PruneMode::heads_and_mlps, pc);
    CHECK(rerun.mask == res.mask);
    CHECK(rerun.trace.iterations.size() == res.trace.iterations.size());
}

TEST_CASE("structured loop limit thresholds") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 8, 32, 16);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 12;
    EncoderParams model = fine_tune(init_params(cfg, 4), task, tc, nullptr, nullptr).model;

    PruneConfig high;
    high.threshold = 1.01;
    StructuredPruneResult kept = structured_prune_loop(model, task, PruneMode::heads_only, high);
    CHECK(kept.trace.iterations.size() == 1);
    CHECK(kept.mask == SubnetworkMask::all_ones(cfg));

    PruneConfig zero;
    zero.threshold = 0.0;
    StructuredPruneResult gone =
        structured_prune_loop(model, task, PruneMode::heads_and_mlps, zero);
    CHECK(gone.mask == SubnetworkMask::all_zeros(cfg));

    StructuredPruneResult heads = structured_prune_loop(model, task, PruneMode::heads_only, zero);
    CHECK(heads.mask.surviving_heads() == 0);
    CHECK(heads.mask.surviving_mlps() == cfg.n_layers);
}

TEST_CASE("block survival accounting matches the mask totals") {
    ModelConfig cfg = toy_config();
    EncoderParams p = init_params(cfg, 51);
    WeightMask m = WeightMask::all_ones(p);

    BlockSurvival full = block_survival_counts(p, m);
    CHECK(full.total() == m.total_weights());
    CHECK(full.row_labels.size() == cfg.n_layers + 1);

    Rng rng(52);
    for (auto& [name, bits] : m.bits)
        for (auto& b : bits) b = rng.bernoulli(0.7) ? 1 : 0;
    BlockSurvival partial = block_survival_counts(p, m);
    CHECK(partial.total() == m.surviving_weights());

    size_t shared_row = cfg.n_layers;
    CHECK(partial.counts[shared_row][0] == 0);
    CHECK(partial.counts[shared_row][1] == 0);
}

TEST_CASE("prune mode names round-trip") {
    for (PruneMode m :
         {PruneMode::heads_only, PruneMode::mlps_only, PruneMode::heads_and_mlps})
        CHECK(prune_mode_from_name(prune_mode_name(m)) == m);
    CHECK_THROWS_AS(prune_mode_from_name("nope"), std::invalid_argument);
}
