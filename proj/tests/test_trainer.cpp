#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "testutil.hpp"
#include "uge/dataio.hpp"
#include "uge/trainer.hpp"

using namespace uge;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig enc;
  enc.hidden = 8;
  enc.layers = 2;
  enc.moments = 2;
  enc.mlp_depth = 2;
  enc.dropout_rate = 0.1;
  return enc;
}

TrainConfig small_train(int max_epoch) {
  TrainConfig cfg;
  cfg.max_epoch = max_epoch;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 4;
  cfg.patience = 50;
  cfg.smooth_window = 3;
  cfg.seed = 9;
  return cfg;
}

testutil::BundleFixture synth_bundle(uint64_t seed) {
  return testutil::make_bundle(synth_cycles_vs_cliques(8, 4, 6, seed), FeaturePolicy{}, seed);
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.warmup_epochs = cfg.max_epoch;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.warmup_epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lr_max = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.patience = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.smooth_window = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.weight_decay = -1e-9;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("learning-rate schedule anchors") {
  const TrainConfig cfg;  // warmup 2, horizon 3000, 1e-4 -> 1e-3 -> 1e-4
  CHECK(lr_at(0, cfg) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at(1, cfg) == doctest::Approx(5.5e-4).epsilon(1e-15));
  CHECK(lr_at(2, cfg) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(lr_at(1501, cfg) == doctest::Approx(5.5e-4).epsilon(1e-12));
  CHECK(lr_at(3000, cfg) == doctest::Approx(1e-4).epsilon(1e-12));

  // continuous across the warmup boundary
  CHECK(std::fabs(lr_at(2.0 - 1e-9, cfg) - lr_at(2.0, cfg)) < 1e-9);

  // monotone decay after warmup
  double prev = lr_at(2, cfg);
  for (int e = 3; e <= 3000; e += 37) {
    const double cur = lr_at(e, cfg);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }

  TrainConfig no_warmup = cfg;
  no_warmup.warmup_epochs = 0;
  CHECK(lr_at(0, no_warmup) == doctest::Approx(1e-3).epsilon(1e-15));

  CHECK_THROWS_AS(lr_at(-0.1, cfg), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(3000.1, cfg), std::invalid_argument);
}

TEST_CASE("optimizer mechanics") {
  SUBCASE("zero gradient and zero decay leave the parameter untouched") {
    ModelParams params;
    params.create("w", Matrix(1, 3, 2.0));
    Adam adam;
    adam.step(params, {{"w", Matrix(1, 3, 0.0)}}, 0.1, 0.0);
    CHECK(max_abs_diff(params.param("w").value(), Matrix(1, 3, 2.0)) == 0.0);
  }

  SUBCASE("weight decay alone pulls the parameter toward zero") {
    ModelParams params;
    params.create("w", Matrix(1, 1, 1.0));
    Adam adam;
    adam.step(params, {{"w", Matrix(1, 1, 0.0)}}, 0.01, 0.1);
    CHECK(params.param("w").value()(0, 0) < 1.0);
    CHECK(params.param("w").value()(0, 0) > 0.9);
  }

  SUBCASE("parameters missing from the gradient map keep their values") {
    ModelParams params;
    params.create("a", Matrix(1, 1, 1.0));
    params.create("b", Matrix(1, 1, 1.0));
    Adam adam;
    adam.step(params, {{"a", Matrix(1, 1, 0.5)}, {"b", Matrix(1, 1, 0.5)}}, 0.1, 0.0);
    const double b_after_first = params.param("b").value()(0, 0);
    adam.step(params, {{"a", Matrix(1, 1, 0.5)}}, 0.1, 0.0);
    CHECK(params.param("b").value()(0, 0) == b_after_first);
    CHECK(params.param("a").value()(0, 0) < b_after_first);
  }

  SUBCASE("a quadratic bowl is solved to 1e-6 with a decaying rate") {
    ModelParams params;
    params.create("w", Matrix(1, 4, 0.0));
    Matrix target(1, 4);
    target(0, 0) = 1.2;
    target(0, 1) = -0.8;
    target(0, 2) = 0.5;
    target(0, 3) = 2.0;

    Adam adam;
    for (int t = 0; t < 2000; ++t) {
      const Matrix& w = params.param("w").value();
      Matrix g(1, 4);
      for (int j = 0; j < 4; ++j) g(0, j) = w(0, j) - target(0, j);
      const double lr = 0.2 * std::exp(-16.0 * t / 2000.0);
      adam.step(params, {{"w", g}}, lr, 0.0);
    }
    CHECK(max_abs_diff(params.param("w").value(), target) < 1e-6);
  }

  SUBCASE("non-finite gradients are reported by name") {
    ModelParams params;
    params.create("enc.w", Matrix(1, 1, 0.0));
    Adam adam;
    Matrix bad(1, 1);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_WITH_AS(adam.step(params, {{"enc.w", bad}}, 0.1, 0.0),
                         doctest::Contains("enc.w"), std::runtime_error);
    CHECK_THROWS_AS(adam.step(params, {{"enc.w", Matrix(2, 2)}}, 0.1, 0.0),
                    std::invalid_argument);
  }
}

TEST_CASE("fold construction") {
  SUBCASE("stratified folds balance classes and partition the indices") {
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[i] = i % 2;
    const FoldPlan plan = make_folds(labels, 5, 13);
    CHECK(plan.stratified);
    REQUIRE(plan.folds.size() == 5);

    std::set<int> seen;
    for (const auto& fold : plan.folds) {
      CHECK(fold.size() == 6);
      int ones = 0;
      for (int i : fold) {
        CHECK(seen.insert(i).second);  // disjoint
        ones += labels[i];
      }
      CHECK(ones == 3);  // 3 of each class per fold
    }
    CHECK(seen.size() == 30);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 29);
  }

  SUBCASE("deterministic in the seed") {
    std::vector<int> labels(20, 0);
    for (int i = 0; i < 20; i += 2) labels[i] = 1;
    const FoldPlan a = make_folds(labels, 4, 7);
    const FoldPlan b = make_folds(labels, 4, 7);
    CHECK(a.folds == b.folds);
    const FoldPlan c = make_folds(labels, 4, 8);
    CHECK(a.folds != c.folds);
  }

  SUBCASE("a rare class downgrades to an unstratified deal") {
    const std::vector<int> labels = {0, 0, 0, 0, 0, 1};
    const FoldPlan plan = make_folds(labels, 3, 7);
    CHECK_FALSE(plan.stratified);
    size_t total = 0;
    for (const auto& fold : plan.folds) total += fold.size();
    CHECK(total == 6);
  }

  SUBCASE("argument errors") {
    CHECK_THROWS_AS(make_folds({0, 1, 0, 1}, 1, 7), std::invalid_argument);
    CHECK_THROWS_AS(make_folds({0, 1, 0}, 4, 7), std::invalid_argument);
  }
}

TEST_CASE("interleaved pretraining") {
  const EncoderConfig enc = small_encoder();
  const LossWeights weights;

  SUBCASE("loss decreases over a few epochs and the run is deterministic") {
    auto run = [&](std::vector<double>* losses) {
      testutil::BundleFixture f = synth_bundle(3);
      ModelParams params;
      const auto hist = pretrain({f.bundle()}, params, enc, weights, small_train(10), 5);
      REQUIRE(hist.size() == 5);
      for (const auto& rec : hist) {
        CHECK(rec.dataset == "*");
        CHECK(std::isfinite(rec.train_loss));
        CHECK(rec.val_loss == -1.0);
        losses->push_back(rec.train_loss);
      }
    };
    std::vector<double> first, second;
    run(&first);
    run(&second);
    CHECK(first == second);  // bit-identical replay
    CHECK(first.back() < first.front());
  }

  SUBCASE("two datasets with different feature widths share the encoder") {
    testutil::BundleFixture fa = synth_bundle(3);
    Dataset featured = synth_cycles_vs_cliques(8, 4, 6, 4);
    featured.name = "featured";
    CounterRng rng(5, 0);
    for (auto& g : featured.graphs) g.features = testutil::random_matrix(g.n, 3, rng);
    testutil::BundleFixture fb = testutil::make_bundle(std::move(featured), FeaturePolicy{}, 4);

    ModelParams params;
    const auto hist = pretrain({fa.bundle(), fb.bundle()}, params, enc, weights,
                               small_train(10), 2);
    CHECK(hist.size() == 2);
    CHECK(params.has("ds.cycles-vs-cliques.input.fc0.w"));
    CHECK(params.has("ds.featured.input.fc0.w"));
    CHECK(params.param("ds.featured.input.fc0.w").rows() == 3);
    // encoder layers exist once, shared
    CHECK(params.has("enc.l1.p1.fc0.w"));
  }

  SUBCASE("each batch reads exactly a batch-squared block of kernel entries") {
    testutil::BundleFixture f = synth_bundle(3);
    ModelParams params;
    pretrain({f.bundle()}, params, enc, weights, small_train(10), 1);
    // 8 graphs in batches of 4: two batches, 16 entries each, per kernel
    for (const auto& k : f.kernels) CHECK(k.slice_reads == 32);
  }

  SUBCASE("argument errors") {
    testutil::BundleFixture f = synth_bundle(3);
    ModelParams params;
    CHECK_THROWS_AS(pretrain({}, params, enc, weights, small_train(10), 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(pretrain({f.bundle()}, params, enc, weights, small_train(10), 11),
                    std::invalid_argument);
    CHECK_THROWS_AS(pretrain({f.bundle()}, params, enc, weights, small_train(10), 0),
                    std::invalid_argument);

    DatasetBundle broken = f.bundle();
    broken.kernels.clear();
    CHECK_THROWS_WITH_AS(pretrain({broken}, params, enc, weights, small_train(10), 1),
                         doctest::Contains("kernels"), std::runtime_error);
  }
}

TEST_CASE("fine-tuning bookkeeping") {
  const EncoderConfig enc = small_encoder();
  const LossWeights weights;
  const FinetuneLossToggles toggles;
  const std::vector<int> train_idx = {0, 1, 2, 3};
  const std::vector<int> val_idx = {4, 5};
  const std::vector<int> test_idx = {6, 7};

  SUBCASE("early stop under zero patience") {
    testutil::BundleFixture f = synth_bundle(3);
    ModelParams params;
    TrainConfig cfg = small_train(30);
    cfg.patience = 0;
    const FinetuneResult res =
        finetune(f.bundle(), params, enc, weights, toggles, cfg, train_idx, val_idx, test_idx);
    CHECK(res.epochs_run == static_cast<int>(res.history.size()));
    const bool stopped_early = res.epochs_run == res.best_epoch + 2;
    const bool hit_cap = res.epochs_run == cfg.max_epoch;
    CHECK((stopped_early || hit_cap));

    double min_smoothed = res.history.front().val_smoothed;
    for (const auto& rec : res.history) min_smoothed = std::min(min_smoothed, rec.val_smoothed);
    CHECK(res.best_val_loss == min_smoothed);

    // params hold the snapshot the accuracy was reported from
    const double again = evaluate_accuracy(f.bundle(), params, enc, test_idx, cfg.batch_size);
    CHECK(again == res.test_accuracy);
  }

  SUBCASE("deterministic replay") {
    auto run = [&]() {
      testutil::BundleFixture f = synth_bundle(3);
      ModelParams params;
      return finetune(f.bundle(), params, enc, weights, toggles, small_train(6), train_idx,
                      val_idx, test_idx);
    };
    const FinetuneResult a = run();
    const FinetuneResult b = run();
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].train_loss == b.history[i].train_loss);
      CHECK(a.history[i].val_loss == b.history[i].val_loss);
    }
    CHECK(a.test_accuracy == b.test_accuracy);
    CHECK(a.best_epoch == b.best_epoch);
  }

  SUBCASE("an empty test set reports accuracy -1") {
    testutil::BundleFixture f = synth_bundle(3);
    ModelParams params;
    const FinetuneResult res = finetune(f.bundle(), params, enc, weights, toggles,
                                        small_train(3), train_idx, val_idx, {});
    CHECK(res.test_accuracy == -1.0);
  }

  SUBCASE("split validation") {
    testutil::BundleFixture f = synth_bundle(3);
    ModelParams params;
    CHECK_THROWS_WITH_AS(finetune(f.bundle(), params, enc, weights, toggles, small_train(3),
                                  {}, val_idx, test_idx),
                         doctest::Contains("training"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(finetune(f.bundle(), params, enc, weights, toggles, small_train(3),
                                  train_idx, {}, test_idx),
                         doctest::Contains("validation"), std::invalid_argument);
  }
}

TEST_CASE("accuracy evaluation uses argmax classification") {
  testutil::BundleFixture f = synth_bundle(3);
  const EncoderConfig enc = small_encoder();

  ModelParams params;
  ensure_encoder_params(params, enc, 9);
  ensure_transformer_params(params, f.prep.name, f.prep.feature_dim, enc, 9);
  ensure_decoder_params(params, f.kinds, enc.hidden, 9);
  ensure_head_params(params, f.prep.name, enc.hidden, f.prep.num_classes, 9);

  // force a constant-class head: zero final weights, bias favoring class 1
  Matrix& w2 = params.param("ds." + f.prep.name + ".head.fc2.w").value();
  for (double& v : w2.values()) v = 0.0;
  Matrix& b2 = params.param("ds." + f.prep.name + ".head.fc2.b").value();
  b2(0, 0) = 0.0;
  b2(0, 1) = 5.0;

  std::vector<int> all_idx(f.prep.size());
  for (int i = 0; i < f.prep.size(); ++i) all_idx[i] = i;
  // synthetic labels alternate, so always-predict-1 is exactly half right
  CHECK(evaluate_accuracy(f.bundle(), params, enc, all_idx, 4) == 0.5);
  CHECK(evaluate_accuracy(f.bundle(), params, enc, {1, 3, 5, 7}, 4) == 1.0);
  CHECK(evaluate_accuracy(f.bundle(), params, enc, {0, 2}, 4) == 0.0);
  CHECK_THROWS_AS(evaluate_accuracy(f.bundle(), params, enc, {}, 4), std::invalid_argument);
}

TEST_CASE("cross-validation protocol") {
  const EncoderConfig enc = small_encoder();
  const LossWeights weights;
  const FinetuneLossToggles toggles;
  TrainConfig cfg = small_train(4);

  SUBCASE("per-fold results are deterministic and the summary is consistent") {
    auto run = [&]() {
      testutil::BundleFixture f = synth_bundle(3);
      return cross_validate(f.bundle(), enc, weights, toggles, cfg, 4, nullptr);
    };
    const FoldResult a = run();
    const FoldResult b = run();
    REQUIRE(a.fold_accuracies.size() == 4);
    CHECK(a.fold_accuracies == b.fold_accuracies);

    double mean = 0.0;
    for (double x : a.fold_accuracies) mean += x;
    mean /= 4.0;
    double var = 0.0;
    for (double x : a.fold_accuracies) var += (x - mean) * (x - mean);
    var /= 4.0;
    CHECK(a.mean == doctest::Approx(mean).epsilon(1e-15));
    CHECK(a.stddev == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  }

  SUBCASE("a pretrained encoder seeds every fold") {
    testutil::BundleFixture f = synth_bundle(3);
    ModelParams pre;
    pretrain({f.bundle()}, pre, enc, weights, small_train(10), 2);

    int calls = 0;
    const FoldResult res = cross_validate(
        f.bundle(), enc, weights, toggles, cfg, 4, &pre,
        [&](int fold, const FinetuneResult& fr, const ModelParams& snap) {
          CHECK(fold == calls);
          CHECK(fr.epochs_run > 0);
          CHECK(snap.has("enc.l1.p1.fc0.w"));
          ++calls;
        });
    CHECK(calls == 4);
    CHECK(res.fold_accuracies.size() == 4);
    for (double acc : res.fold_accuracies) {
      CHECK(acc >= 0.0);
      CHECK(acc <= 1.0);
    }
  }

  SUBCASE("fold count must fit the dataset") {
    testutil::BundleFixture f = synth_bundle(3);
    CHECK_THROWS_AS(cross_validate(f.bundle(), enc, weights, toggles, cfg, 1, nullptr),
                    std::invalid_argument);
    CHECK_THROWS_AS(cross_validate(f.bundle(), enc, weights, toggles, cfg, 9, nullptr),
                    std::invalid_argument);
  }
}
