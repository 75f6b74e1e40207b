#include <doctest.h>

#include <fstream>

#include "layoutdiff/checkpoint.hpp"
#include "layoutdiff/error.hpp"
#include "layoutdiff/training.hpp"
#include "layoutdiff/validation/oracles.hpp"
#include "test_support.hpp"

using namespace layoutdiff;

namespace {

struct Fixture {
  CorpusManifest manifest = read_manifest(testing::small_corpus());
  ModelConfig mc = model_preset("desk", manifest.categories.size());
  NoiseSchedule sched = schedule_preset("desk");
  std::vector<PreparedSample> train_set = load_split(testing::small_corpus(), manifest, Split::train, mc);
  std::vector<PreparedSample> val_set = load_split(testing::small_corpus(), manifest, Split::val, mc);

  TrainConfig config(int epochs) const {
    TrainConfig tc = train_preset("desk");
    tc.epochs = epochs;
    tc.batch_size = 8;
    tc.seed = 11;
    tc.mirror_augment = false;
    return tc;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("mean squared error") {
  Rng rng(1);
  Mat a(7, 5), b(7, 5);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.normal();
    b.data()[i] = rng.normal();
  }
  CHECK(loss(a, a) == 0.0);
  CHECK(loss(a, (a.array() + 0.3).matrix()) == doctest::Approx(0.09).epsilon(1e-12));
  double s = 0.0;
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 5; ++c) s += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
  CHECK(std::abs(loss(a, b) - s / 35.0) <= 1e-10);
  CHECK_THROWS_AS(loss(a, b.topRows(3)), DomainError);
}

TEST_CASE("epoch batches") {
  const auto b = epoch_batches(10, 4, 3, 0);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  CHECK(b == epoch_batches(10, 4, 3, 0));
  CHECK(b != epoch_batches(10, 4, 3, 1));
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);
}

TEST_CASE("presets and validation") {
  CHECK(train_preset("pku").learning_rate == 1e-4);
  CHECK(train_preset("cgl").batch_size == 128);
  CHECK(train_preset("desk", Task::completion).t_sampling == PlanMode::quad);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.task = Task::refine;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("constrained batches feed clean values at masked entries") {
  auto& f = fixture();
  std::vector<const PreparedSample*> batch;
  for (std::size_t i = 0; i < 6; ++i) batch.push_back(&f.train_set[i]);
  for (Task task : {Task::c_to_sp, Task::cs_to_p, Task::completion}) {
    TrainConfig tc = f.config(1);
    tc.task = task;
    Rng rng(2);
    const TrainingBatch pb = prepare_batch(batch, f.mc, f.sched, f.manifest.categories, tc, rng);
    int frozen = 0;
    for (std::size_t b = 0; b < batch.size(); ++b)
      for (int r = 0; r < f.mc.n_max; ++r)
        for (int c = 0; c < f.mc.feature_dim(); ++c) {
          const auto row = static_cast<Eigen::Index>(b) * f.mc.n_max + r;
          if (pb.weight(row, c) == 0.0) {
            ++frozen;
            CHECK(pb.x_t(row, c) == batch[b]->x0.values(r, c));
          }
        }
    CHECK(frozen > 0);
  }
}

TEST_CASE("a fully masked batch changes nothing") {
  ModelConfig cfg = validation::toy_config();
  cfg.n_max = 1;
  Denoiser model(cfg, 1);
  const CategorySet cats = CategorySet::poster();
  PreparedSample s;
  s.layout.elements = {{2, {0.5, 0.5, 0.3, 0.1}}};
  s.x0 = tokenize(s.layout, cats, 1);
  s.cond.patches = Mat::Constant(cfg.patch_count(), cfg.patch_dim(), 0.1);
  const PreparedSample* batch[] = {&s};
  TrainConfig tc;
  tc.task = Task::completion;
  AdamState adam;
  Rng rng(0);
  std::vector<Mat> before;
  for (const auto& p : model.params().all()) before.push_back(p->value);
  CHECK(train_step(model, batch, schedule_preset("desk"), cats, tc, adam, rng) == 0.0);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.params().all()[i]->value == before[i]);
}

TEST_CASE("smoke training reduces the loss and stays finite") {
  auto& f = fixture();
  Denoiser model(f.mc, 4);
  TrainConfig tc = f.config(60);
  tc.learning_rate = 1e-3;
  const TrainResult r = train(model, f.sched, f.manifest.categories, f.train_set, {}, tc);
  REQUIRE(r.losses.size() == 240);
  auto mean = [](auto first, auto last) { return std::accumulate(first, last, 0.0) / std::distance(first, last); };
  const double head = mean(r.losses.begin(), r.losses.begin() + 10);
  const double tail = mean(r.losses.end() - 20, r.losses.end());
  CHECK(tail < 0.5 * head);
  for (const auto& p : model.params().all()) CHECK(p->value.allFinite());
}

TEST_CASE("same seed, same loss trajectory") {
  auto& f = fixture();
  TrainConfig tc = f.config(2);
  tc.mirror_augment = true;
  Denoiser a(f.mc, 4), b(f.mc, 4);
  const auto ra = train(a, f.sched, f.manifest.categories, f.train_set, {}, tc);
  const auto rb = train(b, f.sched, f.manifest.categories, f.train_set, {}, tc);
  CHECK(ra.losses == rb.losses);
}

TEST_CASE("validation loss leaves the model untouched") {
  auto& f = fixture();
  Denoiser model(f.mc, 4);
  std::vector<Mat> before;
  for (const auto& p : model.params().all()) before.push_back(p->value);
  const double v1 = validation_loss(model, f.val_set, f.sched, f.manifest.categories, f.config(1), 9);
  const double v2 = validation_loss(model, f.val_set, f.sched, f.manifest.categories, f.config(1), 9);
  CHECK(v1 == v2);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.params().all()[i]->value == before[i]);
}

TEST_CASE("batch order does not change the summed loss at lr = 0") {
  auto& f = fixture();
  Denoiser model(f.mc, 4);
  TrainConfig tc = f.config(1);
  tc.learning_rate = 0.0;
  tc.batch_size = 1;
  std::vector<const PreparedSample*> order;
  for (std::size_t i = 0; i < 6; ++i) order.push_back(&f.train_set[i]);
  auto total = [&](const std::vector<const PreparedSample*>& o) {
    double sum = 0.0;
    AdamState adam;
    for (const auto* s : o) {
      // Per-sample noise seeded by the sample so only the order changes.
      Rng rng(std::hash<std::string>{}(s->id));
      const PreparedSample* one[] = {s};
      sum += train_step(model, one, f.sched, f.manifest.categories, tc, adam, rng);
    }
    return sum;
  };
  const double forward = total(order);
  std::reverse(order.begin(), order.end());
  CHECK(total(order) == doctest::Approx(forward).epsilon(1e-12));
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  auto& f = fixture();
  const TrainConfig tc = f.config(4);
  const auto dir = testing::scratch("resume");
  Denoiser full(f.mc, 4);
  const auto whole = train(full, f.sched, f.manifest.categories, f.train_set, {}, tc);

  TrainOptions first;
  first.out_dir = dir;
  first.max_epochs = 2;
  Denoiser part(f.mc, 4);
  const auto a = train(part, f.sched, f.manifest.categories, f.train_set, {}, tc, first);

  TrainOptions second = first;
  second.resume = true;
  second.max_epochs = 0;
  Denoiser fresh(f.mc, 999);
  const auto b = train(fresh, f.sched, f.manifest.categories, f.train_set, {}, tc, second);

  std::vector<double> joined = a.losses;
  joined.insert(joined.end(), b.losses.begin(), b.losses.end());
  CHECK(joined == whole.losses);
  for (std::size_t i = 0; i < full.params().all().size(); ++i)
    CHECK(full.params().all()[i]->value == fresh.params().all()[i]->value);

  TrainConfig other = tc;
  other.learning_rate = 1e-2;
  Denoiser again(f.mc, 4);
  CHECK_THROWS_AS(train(again, f.sched, f.manifest.categories, f.train_set, {}, other, second), ConfigError);
}

TEST_CASE("checkpoint round trip and mismatch errors") {
  auto& f = fixture();
  const auto dir = testing::scratch("ckpt");
  Denoiser model(f.mc, 21);
  TrainState st;
  st.epoch = 3;
  st.step = 42;
  Rng rng(5);
  rng.normal();
  st.rng_state = rng.save();
  AdamState adam;
  model.params().zero_grad();
  adam_update(model.params(), adam, 1e-3, 1.0);
  st.adam = adam;
  const TrainConfig tc = f.config(7);
  write_checkpoint(dir / "c.bin", make_checkpoint(model, f.manifest.categories, f.sched, tc, st));

  const Checkpoint ck = read_checkpoint(dir / "c.bin");
  CHECK(ck.model == f.mc);
  CHECK(ck.train == tc);
  CHECK(ck.categories == f.manifest.categories);
  CHECK(ck.state.step == 42);
  CHECK(ck.state.rng_state == st.rng_state);
  CHECK(ck.state.adam.step == adam.step);
  CHECK(ck.schedule().alpha_bars == f.sched.alpha_bars);
  const Denoiser back = restore_model(ck);
  for (std::size_t i = 0; i < back.params().all().size(); ++i)
    CHECK(back.params().all()[i]->value == model.params().all()[i]->value);

  ModelConfig other = f.mc;
  other.d_model = 32;
  Denoiser wrong(other, 0);
  try {
    load_parameters(wrong, ck);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("d_model") != std::string::npos);
  }

  std::ofstream(dir / "junk.bin") << "not a checkpoint";
  CHECK_THROWS_AS(read_checkpoint(dir / "junk.bin"), IoError);
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.bin"), IoError);
}
