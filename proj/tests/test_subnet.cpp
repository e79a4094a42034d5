#include "doctest.h"

#include "ticketlab/metrics.hpp"
#include "ticketlab/rng.hpp"
#include "ticketlab/subnet.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace ticketlab;

namespace {

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

SubnetworkMask mask_with_heads(const ModelConfig& cfg, size_t keep_heads, size_t keep_mlps) {
    SubnetworkMask m = SubnetworkMask::all_zeros(cfg);
    size_t placed = 0;
    for (auto& row : m.heads)
        for (auto& x : row)
            if (placed++ < keep_heads) x = 1.0;
    for (size_t l = 0; l < keep_mlps; ++l) m.mlps[l] = 1.0;
    return m;
}

size_t head_overlap(const SubnetworkMask& a, const SubnetworkMask& b) {
    size_t n = 0;
    for (size_t l = 0; l < a.heads.size(); ++l)
        for (size_t h = 0; h < a.heads[l].size(); ++h)
            if (a.head_on(l, h) && b.head_on(l, h)) ++n;
    return n;
}

size_t weight_overlap(const WeightMask& a, const WeightMask& b) {
    size_t n = 0;
    for (size_t t = 0; t < a.bits.size(); ++t)
        for (size_t i = 0; i < a.bits[t].second.size(); ++i)
            if (a.bits[t].second[i] && b.bits[t].second[i]) ++n;
    return n;
}

} // namespace

TEST_CASE("random subnetworks match sizes and the hypergeometric mean") {
    ModelConfig cfg;  // 4x4 heads
    SubnetworkMask good = mask_with_heads(cfg, 6, 2);
    Rng rng(77);

    double total_overlap = 0.0;
    const size_t draws = 200;
    for (size_t i = 0; i < draws; ++i) {
        SubnetworkMask r = sample_random_subnetwork(good, rng);
        CHECK(r.surviving_heads() == 6);
        CHECK(r.surviving_mlps() == 2);
        total_overlap += static_cast<double>(head_overlap(r, good));
    }
    // sampling 6 of 16 against 6 marked: mean 2.25, sd 0.968
    double mean_overlap = total_overlap / static_cast<double>(draws);
    double sigma_mean = 0.968 / std::sqrt(static_cast<double>(draws));
    CHECK(std::fabs(mean_overlap - 2.25) < 3.0 * sigma_mean);

    SubnetworkMask full = SubnetworkMask::all_ones(cfg);
    CHECK(sample_random_subnetwork(full, rng) == full);
}

TEST_CASE("random weight masks match sizes and the hypergeometric mean") {
    ModelConfig cfg = small_config();
    EncoderParams p = init_params(cfg, 5);
    WeightMask good = WeightMask::all_ones(p);
    Rng seed_rng(6);
    size_t keep = 0;
    for (auto& [name, bits] : good.bits)
        for (auto& b : bits) {
            b = seed_rng.bernoulli(0.33) ? 1 : 0;
            keep += b;
        }
    REQUIRE(keep > 0);

    double n = static_cast<double>(good.total_weights());
    double k = static_cast<double>(keep);
    double mu = k * k / n;
    double var = k * (k / n) * (1.0 - k / n) * ((n - k) / (n - 1.0));

    Rng rng(78);
    const size_t draws = 50;
    double total = 0.0;
    for (size_t i = 0; i < draws; ++i) {
        WeightMask r = sample_random_subnetwork(good, rng);
        CHECK(r.surviving_weights() == keep);
        total += static_cast<double>(weight_overlap(r, good));
    }
    double sigma_mean = std::sqrt(var / static_cast<double>(draws));
    CHECK(std::fabs(total / static_cast<double>(draws) - mu) < 3.0 * sigma_mean);

    WeightMask full = WeightMask::all_ones(p);
    CHECK(sample_random_subnetwork(full, rng) == full);
}

TEST_CASE("bad subnetworks prefer non-survivors and top up exactly") {
    ModelConfig cfg;  // 16 heads, 4 mlps
    Rng rng(79);

    SUBCASE("plenty of non-survivors keeps bad disjoint from good") {
        SubnetworkMask good = mask_with_heads(cfg, 4, 1);
        SubnetworkMask bad = sample_bad_subnetwork(good, rng);
        CHECK(bad.surviving_heads() == 4);
        CHECK(bad.surviving_mlps() == 1);
        CHECK(head_overlap(bad, good) == 0);
    }
    SUBCASE("scarce non-survivors force a measured top-up") {
        SubnetworkMask good = mask_with_heads(cfg, 12, 3);
        SubnetworkMask bad = sample_bad_subnetwork(good, rng);
        CHECK(bad.surviving_heads() == 12);
        CHECK(head_overlap(bad, good) == 8);  // 12 wanted, 4 non-survivors
        for (size_t l = 0; l < cfg.n_layers; ++l)
            for (size_t h = 0; h < cfg.n_heads; ++h)
                if (!good.head_on(l, h)) CHECK(bad.head_on(l, h));
    }
    SUBCASE("full good forces full bad") {
        SubnetworkMask full = SubnetworkMask::all_ones(cfg);
        CHECK(sample_bad_subnetwork(full, rng) == full);
    }
    SUBCASE("weight masks follow the same arithmetic") {
        EncoderParams p = init_params(small_config(), 7);
        WeightMask good = WeightMask::all_ones(p);
        size_t total = good.total_weights();
        size_t flat = 0;
        for (auto& [name, bits] : good.bits)
            for (auto& b : bits) b = (flat++ < total * 3 / 4) ? 1 : 0;
        size_t keep = good.surviving_weights();

        WeightMask bad = sample_bad_subnetwork(good, rng);
        CHECK(bad.surviving_weights() == keep);
        CHECK(weight_overlap(bad, good) == keep - (total - keep));
    }
}

TEST_CASE("super survivors are the elementwise AND") {
    ModelConfig cfg;
    SubnetworkMask a = mask_with_heads(cfg, 10, 3);
    SubnetworkMask b = mask_with_heads(cfg, 7, 2);
    Rng rng(80);
    SubnetworkMask c = sample_random_subnetwork(a, rng);

    SubnetworkMask super = super_survivors({a, b, c});
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        for (size_t h = 0; h < cfg.n_heads; ++h)
            CHECK(super.head_on(l, h) ==
                  (a.head_on(l, h) && b.head_on(l, h) && c.head_on(l, h)));
        CHECK(super.mlp_on(l) == (a.mlp_on(l) && b.mlp_on(l) && c.mlp_on(l)));
    }
    CHECK(super.surviving_heads() <= b.surviving_heads());
    CHECK(super_survivors({a, a}) == a);
    CHECK(super_survivors({a, b, c, super}) == super);

    CHECK_THROWS_AS(super_survivors({a}), std::invalid_argument);
    SubnetworkMask other = SubnetworkMask::all_ones(small_config());
    CHECK_THROWS_AS(super_survivors({a, other}), std::invalid_argument);
}

TEST_CASE("full-mask experiment reproduces plain fine-tuning") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 21, 32, 16);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 3;
    EncoderParams pretrained = init_params(cfg, 40);
    EncoderParams tuned = fine_tune(pretrained, task, tc, nullptr, nullptr).model;

    SubnetworkMask full = SubnetworkMask::all_ones(cfg);
    ExperimentRecord rec = lth_experiment(pretrained, tuned, task, 3, PruneMethod::structured,
                                          SubnetworkKind::good, &full, nullptr, tc);

    TrainConfig same = tc;
    same.seed = 3;
    FineTuneResult plain = fine_tune(pretrained, task, same, nullptr, nullptr);
    CHECK(rec.retrained_metric == plain.dev_metric);
    CHECK(rec.pruned_metric == evaluate(tuned, task.dev, task.spec.kind, task.spec.metric, nullptr));
    CHECK(rec.size_fraction == 1.0);
    CHECK(rec.retrained);

    ExperimentRecord again = lth_experiment(pretrained, tuned, task, 3, PruneMethod::structured,
                                            SubnetworkKind::good, &full, nullptr, tc);
    CHECK(again.retrained_metric == rec.retrained_metric);
    CHECK(again.pruned_metric == rec.pruned_metric);
    CHECK(again.subnet == rec.subnet);
}

TEST_CASE("derived kinds keep the good mask's size") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 22, 32, 16);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 4;
    EncoderParams pretrained = init_params(cfg, 41);
    EncoderParams tuned = fine_tune(pretrained, task, tc, nullptr, nullptr).model;

    SubnetworkMask good = mask_with_heads(cfg, 2, 1);
    ExperimentRecord r_rand = lth_experiment(pretrained, tuned, task, 4, PruneMethod::structured,
                                             SubnetworkKind::random, &good, nullptr, tc);
    ExperimentRecord r_bad = lth_experiment(pretrained, tuned, task, 4, PruneMethod::structured,
                                            SubnetworkKind::bad, &good, nullptr, tc);
    CHECK(r_rand.subnet.surviving_heads() == good.surviving_heads());
    CHECK(r_rand.subnet.surviving_mlps() == good.surviving_mlps());
    CHECK(r_bad.subnet.surviving_heads() == good.surviving_heads());
    CHECK(head_overlap(r_bad.subnet, good) == 0);  // 2 of 4 kept leaves 2 free
    CHECK(r_rand.size_fraction == r_bad.size_fraction);

    CHECK_THROWS_AS(lth_experiment(pretrained, tuned, task, 4, PruneMethod::structured,
                                   SubnetworkKind::super_survivor, &good, nullptr, tc),
                    std::invalid_argument);
    CHECK_THROWS_AS(lth_experiment(pretrained, tuned, task, 4, PruneMethod::structured,
                                   SubnetworkKind::good, nullptr, nullptr, tc),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_subnetwork(pretrained, tuned, task, 4, PruneMethod::magnitude,
                                   SubnetworkKind::good, &good, nullptr, tc),
                    std::invalid_argument);
}

TEST_CASE("magnitude-method experiments run against weight masks") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 23, 32, 16);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 5;
    EncoderParams pretrained = init_params(cfg, 42);
    EncoderParams tuned = fine_tune(pretrained, task, tc, nullptr, nullptr).model;

    WeightMask good = WeightMask::all_ones(tuned);
    Rng thin(90);
    for (auto& [name, bits] : good.bits)
        for (auto& b : bits) b = thin.bernoulli(0.5) ? 1 : 0;

    ExperimentRecord rec = lth_experiment(pretrained, tuned, task, 5, PruneMethod::magnitude,
                                          SubnetworkKind::random, nullptr, &good, tc);
    CHECK(rec.weights.surviving_weights() == good.surviving_weights());
    CHECK(rec.size_fraction == doctest::Approx(good.surviving_fraction()));
    CHECK(rec.retrained);
    CHECK(prune_method_name(rec.method) == "m");
}

TEST_CASE("random-init baseline matches the reference size without pretraining") {
    ModelConfig cfg = small_config();
    Task task = make_task("presence", 24, 32, 16);
    TrainConfig tc;
    tc.epochs = 1;

    SubnetworkMask ref = mask_with_heads(cfg, 3, 1);
    ExperimentRecord rec = random_init_baseline(cfg, task, 6, ref, tc);
    CHECK(rec.kind == SubnetworkKind::random_init_random_prune);
    CHECK(rec.subnet.surviving_heads() == 3);
    CHECK(rec.subnet.surviving_mlps() == 1);
    CHECK(rec.retrained);

    ExperimentRecord again = random_init_baseline(cfg, task, 6, ref, tc);
    CHECK(again.retrained_metric == rec.retrained_metric);
    CHECK(again.subnet == rec.subnet);

    ExperimentRecord other_seed = random_init_baseline(cfg, task, 7, ref, tc);
    CHECK(other_seed.subnet.surviving_heads() == 3);
}

TEST_CASE("success criterion uses mean minus one standard deviation") {
    std::vector<double> fulls{0.8, 0.9};
    double m = mean(fulls);
    double s = sample_std(fulls);

    CHECK(success_criterion(m, fulls));
    CHECK(success_criterion(m - s, fulls));
    CHECK(!success_criterion(m - 2.0 * s, fulls));
    CHECK_THROWS_AS(success_criterion(0.5, {0.8}), std::invalid_argument);
}

TEST_CASE("kind and method names round-trip") {
    for (SubnetworkKind k :
         {SubnetworkKind::good, SubnetworkKind::random, SubnetworkKind::bad,
          SubnetworkKind::super_survivor, SubnetworkKind::random_init_random_prune})
        CHECK(subnetwork_kind_from_name(subnetwork_kind_name(k)) == k);
    for (PruneMethod m : {PruneMethod::magnitude, PruneMethod::structured})
        CHECK(prune_method_from_name(prune_method_name(m)) == m);
    CHECK_THROWS_AS(subnetwork_kind_from_name("great"), std::invalid_argument);
    CHECK_THROWS_AS(prune_method_from_name("x"), std::invalid_argument);
}
