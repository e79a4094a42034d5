#include "ticketlab/training.hpp"

#include "ticketlab/metrics.hpp"
#include "ticketlab/rng.hpp"

#include "doctest.h"

#include <cmath>

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

TrainConfig quick_train(uint64_t seed) {
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.lr = 1e-3;
    tc.seed = seed;
    return tc;
}

} // namespace

TEST_CASE("adam drives a quadratic to its minimum") {
    Tensor w = Tensor::from_values({1, 4}, {5.0, -3.0, 0.5, 8.0}, true);
    Tensor target = Tensor::from_values({1, 4}, {1.0, 2.0, 3.0, 4.0});
    TrainConfig tc;
    tc.lr = 0.05;
    Adam adam({w}, tc);
    for (int i = 0; i < 400; ++i) {
        adam.zero_grads();
        mse(w, target).backward();
        adam.step();
    }
    for (size_t j = 0; j < 4; ++j)
        CHECK(w.values()[j] == doctest::Approx(target.values()[j]).epsilon(1e-3));
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.lr = 0.0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    Task task = make_task("presence", 1, 8, 4);
    EncoderParams p = init_params(small_config(), 1);
    tc.epochs = 0;
    CHECK_THROWS_AS(fine_tune(p, task, tc, nullptr, nullptr), std::invalid_argument);
}

TEST_CASE("fine_tune is deterministic in all its seams") {
    EncoderParams p = init_params(small_config(), 100);
    Task task = make_task("presence", 42, 24, 12);
    TrainConfig tc = quick_train(7);

    FineTuneResult a = fine_tune(p, task, tc, nullptr, nullptr);
    FineTuneResult b = fine_tune(p, task, tc, nullptr, nullptr);
    CHECK(a.dev_metric == b.dev_metric);
    CHECK(a.model.cls_w.values() == b.model.cls_w.values());
    CHECK(a.model.layers[0].heads[0].wq.values() == b.model.layers[0].heads[0].wq.values());
    CHECK(a.epoch_dev_metrics == b.epoch_dev_metrics);

    TrainConfig other = quick_train(8);
    FineTuneResult c = fine_tune(p, task, other, nullptr, nullptr);
    CHECK(a.model.cls_w.values() != c.model.cls_w.values());

    // the pretrained source is untouched
    EncoderParams q = init_params(small_config(), 100);
    for (size_t i = 0; i < p.all_tensors().size(); ++i)
        CHECK(p.all_tensors()[i].values() == q.all_tensors()[i].values());
}

TEST_CASE("masked weights stay exactly zero through training") {
    EncoderParams p = init_params(small_config(), 3);
    Task task = make_task("order", 5, 24, 12);
    TrainConfig tc = quick_train(11);

    WeightMask wm = WeightMask::all_ones(p);
    Rng rng(17);
    size_t dropped = 0;
    for (auto& [name, bits] : wm.bits)
        for (auto& bit : bits)
            if (rng.bernoulli(0.3)) {
                bit = 0;
                ++dropped;
            }
    REQUIRE(dropped > 100);

    FineTuneResult r = fine_tune(p, task, tc, nullptr, &wm);
    auto prunable = r.model.prunable_tensors();
    size_t still_zero = 0, moved = 0;
    for (size_t i = 0; i < wm.bits.size(); ++i) {
        const auto& bits = wm.bits[i].second;
        const auto& vals = prunable[i].second.values();
        for (size_t j = 0; j < bits.size(); ++j) {
            if (!bits[j]) {
                CHECK(vals[j] == 0.0);
                ++still_zero;
            } else if (vals[j] != 0.0) {
                ++moved;
            }
        }
    }
    CHECK(still_zero == dropped);
    CHECK(moved > 0);
}

TEST_CASE("subnetwork masks flow through training and evaluation") {
    EncoderParams p = init_params(small_config(), 9);
    Task task = make_task("presence", 21, 16, 8);
    TrainConfig tc = quick_train(2);

    SubnetworkMask m = SubnetworkMask::all_ones(p.config);
    m.heads[0][0] = 0.0;
    m.mlps[1] = 0.0;
    FineTuneResult r = fine_tune(p, task, tc, &m, nullptr);
    CHECK(std::isfinite(r.dev_metric));
    CHECK(r.model.layers[0].heads[0].wq.values() ==
          p.layers[0].heads[0].wq.values());  // masked head never trained

    SubnetworkMask none = SubnetworkMask::all_zeros(p.config);
    FineTuneResult bare = fine_tune(p, task, tc, &none, nullptr);
    CHECK(std::isfinite(bare.dev_metric));
    CHECK(bare.dev_metric >= 0.0);
}

TEST_CASE("regression task trains against mse and evaluates with pearson") {
    EncoderParams p = init_params(small_config(), 50);
    Task task = make_task("locate", 31, 24, 12);
    REQUIRE(task.spec.kind == TaskKind::regression);
    TrainConfig tc = quick_train(4);
    FineTuneResult r = fine_tune(p, task, tc, nullptr, nullptr);
    CHECK(r.model.cls_w.shape() == std::vector<size_t>{1, 16});
    CHECK(r.dev_metric >= -1.0);
    CHECK(r.dev_metric <= 1.0);

    auto preds = predict(r.model, task.dev, task.spec.kind, nullptr);
    CHECK(preds.size() == task.dev.size());
    CHECK(r.dev_metric == doctest::Approx(pearson_corr(preds, task.dev.labels)));
}

TEST_CASE("pretraining with zero epochs returns the weights unchanged") {
    EncoderParams p = init_params(small_config(), 8);
    Dataset corpus = make_pretrain_corpus(1, 40);
    TrainConfig tc;
    tc.epochs = 0;
    tc.seed = 5;
    PretrainResult r = pretrain_mlm(p, corpus, tc);
    auto before = p.named_tensors();
    auto after = r.model.named_tensors();
    for (size_t i = 0; i < before.size(); ++i)
        CHECK(before[i].second.values() == after[i].second.values());
    CHECK(r.epoch_losses.empty());
}

TEST_CASE("pretraining reduces the masked-LM loss and is reproducible") {
    EncoderParams p = init_params(small_config(), 8);
    Dataset corpus = make_pretrain_corpus(2, 120);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.lr = 1e-3;
    tc.seed = 5;

    PretrainResult a = pretrain_mlm(p, corpus, tc);
    REQUIRE(a.epoch_losses.size() == 2);
    CHECK(a.epoch_losses[1] < a.epoch_losses[0]);
    CHECK(a.heldout_masked_accuracy >= 0.0);
    CHECK(a.unigram_baseline >= 0.0);
    CHECK(a.unigram_baseline <= 1.0);

    PretrainResult b = pretrain_mlm(p, corpus, tc);
    CHECK(a.epoch_losses == b.epoch_losses);
    CHECK(a.heldout_masked_accuracy == b.heldout_masked_accuracy);
    auto ta = a.model.named_tensors(), tb = b.model.named_tensors();
    for (size_t i = 0; i < ta.size(); ++i)
        CHECK(ta[i].second.values() == tb[i].second.values());
}

TEST_CASE("evaluate dispatches each metric") {
    EncoderParams p = init_params(small_config(), 2);
    Task acc = make_task("presence", 3, 8, 6);
    Task mcc = make_task("grammar", 3, 8, 6);
    double a = evaluate(p, acc.dev, acc.spec.kind, acc.spec.metric, nullptr);
    double m = evaluate(p, mcc.dev, mcc.spec.kind, mcc.spec.metric, nullptr);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(m >= -1.0);
    CHECK(m <= 1.0);
}
