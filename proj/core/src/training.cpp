#include "layoutdiff/training.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "layoutdiff/checkpoint.hpp"
#include "layoutdiff/error.hpp"

namespace layoutdiff {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (save_every < 0 || val_every < 0) throw ConfigError("intervals must be nonnegative");
  if (task == Task::refine) throw ConfigError("refinement uses an unconditionally trained model");
}

TrainConfig train_preset(std::string_view name, Task task) {
  TrainConfig c;
  if (name == "desk") {
    c.epochs = 400;
    c.batch_size = 32;
    c.learning_rate = 3e-4;
    c.mirror_augment = true;
  } else if (name == "pku") {
    c.epochs = 500;
    c.batch_size = 32;
    c.learning_rate = 1e-4;
  } else if (name == "cgl") {
    c.epochs = 500;
    c.batch_size = 128;
    c.learning_rate = 2e-4;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  c.task = task;
  if (task != Task::uncond) {
    c.epochs = 400;
    c.t_sampling = PlanMode::quad;
  }
  return c;
}

double loss(const Mat& eps, const Mat& eps_hat) {
  if (eps.rows() != eps_hat.rows() || eps.cols() != eps_hat.cols()) throw DomainError("loss: shape mismatch");
  if (eps.size() == 0) return 0.0;
  return (eps_hat - eps).squaredNorm() / static_cast<double>(eps.size());
}

int sample_timestep(int steps, PlanMode mode, Rng& rng) {
  if (steps < 1) throw DomainError("sample_timestep: T must be >= 1");
  if (mode == PlanMode::uniform) return rng.uniform_int(1, steps);
  const double u = 1.0 - rng.uniform();  // (0, 1]
  return std::clamp(static_cast<int>(std::ceil(steps * u * u)), 1, steps);
}

double adam_update(nn::ParamStore& params, AdamState& state, double lr, double clip) {
  auto& all = params.all();
  if (state.m.size() != all.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : all) {
      state.m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  double sq = 0.0;
  for (const auto& p : all)
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  const double scale = norm > clip ? clip / norm : 1.0;

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++state.step;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& p = *all[i];
    if (p.grad.size() == 0) p.grad = Mat::Zero(p.value.rows(), p.value.cols());
    const Mat g = p.grad * scale;
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g.cwiseProduct(g);
    p.value.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + eps);
  }
  return norm;
}

TrainingBatch prepare_batch(std::span<const PreparedSample* const> batch, const ModelConfig& mc,
                            const NoiseSchedule& sched, const CategorySet& cats, const TrainConfig& cfg, Rng& rng) {
  const int n = mc.n_max, f = mc.feature_dim();
  const auto B = static_cast<int>(batch.size());
  TrainingBatch pb;
  pb.x_t.resize(B * n, f);
  pb.target.resize(B * n, f);
  pb.weight = Mat::Ones(B * n, f);
  std::vector<const SampleCondition*> conds;
  for (int b = 0; b < B; ++b) {
    const auto& s = *batch[static_cast<std::size_t>(b)];
    const int t = sample_timestep(sched.steps, cfg.t_sampling, rng);
    Mat eps(n, f);
    for (Eigen::Index c = 0; c < f; ++c)
      for (Eigen::Index r = 0; r < n; ++r) eps(r, c) = rng.normal();
    Mat xt = forward_sample(s.x0.values, t, eps, sched);
    if (cfg.task != Task::uncond) {
      const Mat mask = make_task_mask(cfg.task, s.layout, cats, n, rng).mask;
      xt = (mask.array() > 0.5).select(s.x0.values, xt);
      pb.weight.middleRows(b * n, n) = Mat::Ones(n, f) - mask;
    }
    pb.x_t.middleRows(b * n, n) = xt;
    pb.target.middleRows(b * n, n) = eps;
    pb.steps.push_back(t);
    conds.push_back(&s.cond);
  }
  pb.cond = Conditioning::stack(conds);
  return pb;
}

double train_step(Denoiser& model, std::span<const PreparedSample* const> batch, const NoiseSchedule& sched,
                  const CategorySet& cats, const TrainConfig& cfg, AdamState& adam, Rng& rng) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const TrainingBatch pb = prepare_batch(batch, model.config(), sched, cats, cfg, rng);
  if (pb.weight.sum() == 0.0) return 0.0;

  ag::Graph g;
  const auto out = model.forward(g, pb.x_t, pb.steps, pb.cond);
  const ag::Var l = ag::masked_mse(out.eps, pb.target, pb.weight);
  const double value = l.value()(0, 0);
  if (!std::isfinite(value))
    throw NumericError("non-finite training loss at optimizer step " + std::to_string(adam.step + 1));
  model.params().zero_grad();
  g.backward(l);
  adam_update(model.params(), adam, cfg.learning_rate, cfg.grad_clip);
  return value;
}

double validation_loss(const Denoiser& model, std::span<const PreparedSample> samples, const NoiseSchedule& sched,
                       const CategorySet& cats, const TrainConfig& cfg, std::uint64_t seed) {
  if (samples.empty()) return 0.0;
  Rng rng(seed);
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
    std::vector<const PreparedSample*> batch;
    for (std::size_t j = i; j < std::min(samples.size(), i + static_cast<std::size_t>(cfg.batch_size)); ++j)
      batch.push_back(&samples[j]);
    const TrainingBatch pb = prepare_batch(batch, model.config(), sched, cats, cfg, rng);
    const double w = pb.weight.sum();
    if (w == 0.0) continue;
    const Mat eps_hat = model.predict_noise(pb.x_t, pb.steps, pb.cond);
    weighted += (pb.weight.array() * (eps_hat - pb.target).array().square()).sum();
    total += w;
  }
  return total > 0.0 ? weighted / total : 0.0;
}

TrainResult train(Denoiser& model, const NoiseSchedule& sched, const CategorySet& cats,
                  std::span<const PreparedSample> train_set, std::span<const PreparedSample> val_set,
                  const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training corpus is empty");
  namespace fs = std::filesystem;

  TrainResult result;
  TrainState& st = result.state;
  Rng rng(cfg.seed);
  const fs::path ckpt_path = opts.out_dir.empty() ? fs::path() : opts.out_dir / "checkpoint.bin";
  if (!opts.out_dir.empty()) fs::create_directories(opts.out_dir);

  if (opts.resume && !ckpt_path.empty() && fs::exists(ckpt_path)) {
    const Checkpoint ckpt = read_checkpoint(ckpt_path);
    if (!(ckpt.train == cfg)) throw ConfigError("resume: training config differs from the checkpoint");
    load_parameters(model, ckpt);
    st = ckpt.state;
    rng.restore(st.rng_state);
  }

  std::ofstream log;
  if (!opts.out_dir.empty()) {
    log.open(opts.out_dir / "train_log.jsonl", st.epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open training log in " + opts.out_dir.string());
  }

  auto save = [&] {
    if (ckpt_path.empty()) return;
    st.rng_state = rng.save();
    write_checkpoint(ckpt_path, make_checkpoint(model, cats, sched, cfg, st));
  };

  // Mirror images are built once; variant 0 is the sample itself.
  std::vector<std::array<PreparedSample, 3>> mirrored;
  if (cfg.mirror_augment)
    for (const auto& s : train_set)
      mirrored.push_back({mirror_sample(s, cats, model.config(), true, false),
                          mirror_sample(s, cats, model.config(), false, true),
                          mirror_sample(s, cats, model.config(), true, true)});

  const auto t0 = std::chrono::steady_clock::now();
  const int stop = opts.max_epochs > 0 ? std::min(cfg.epochs, st.epoch + opts.max_epochs) : cfg.epochs;
  while (st.epoch < stop) {
    for (const auto& idx : epoch_batches(train_set.size(), cfg.batch_size, cfg.seed, st.epoch)) {
      std::vector<const PreparedSample*> batch;
      for (std::size_t i : idx) {
        const int variant = cfg.mirror_augment ? rng.uniform_int(0, 3) : 0;
        batch.push_back(variant == 0 ? &train_set[i] : &mirrored[i][static_cast<std::size_t>(variant - 1)]);
      }
      const double l = train_step(model, batch, sched, cats, cfg, st.adam, rng);
      ++st.step;
      result.losses.push_back(l);

      TrainRecord rec{st.step, st.epoch, l, cfg.learning_rate,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), std::nullopt};
      if (log) {
        log << nlohmann::json{{"step", rec.step}, {"epoch", rec.epoch}, {"loss", rec.loss}, {"lr", rec.lr},
                              {"wall_time", rec.wall_time}}
                   .dump()
            << '\n';
      }
      if (opts.on_record) opts.on_record(rec);
    }
    ++st.epoch;

    if (cfg.val_every > 0 && st.epoch % cfg.val_every == 0 && !val_set.empty()) {
      const double v = validation_loss(model, val_set, sched, cats, cfg, mix_seed(cfg.seed ^ 0x5641ULL, st.epoch));
      result.val_losses.push_back(v);
      if (log) log << nlohmann::json{{"epoch", st.epoch}, {"step", st.step}, {"val_loss", v}}.dump() << '\n';
      if (opts.on_record) {
        TrainRecord rec;
        rec.step = st.step;
        rec.epoch = st.epoch;
        rec.lr = cfg.learning_rate;
        rec.val_loss = v;
        opts.on_record(rec);
      }
    }
    if (cfg.save_every > 0 && st.epoch % cfg.save_every == 0 && st.epoch < cfg.epochs) save();
  }
  if (log) log.flush();
  save();
  st.rng_state = rng.save();
  return result;
}

}  // namespace layoutdiff
