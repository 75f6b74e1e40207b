#include "layoutdiff/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "layoutdiff/error.hpp"

namespace layoutdiff {

namespace {

constexpr char kMagic[8] = {'L', 'D', 'I', 'F', 'F', 'C', 'K', 'P'};

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"t_sampling", plan_mode_name(c.t_sampling)},
          {"task", task_name(c.task)},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"save_every", c.save_every},
          {"val_every", c.val_every},
          {"mirror_augment", c.mirror_augment}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.t_sampling = parse_plan_mode(j.at("t_sampling").get<std::string>());
  c.task = parse_task(j.at("task").get<std::string>());
  c.grad_clip = j.at("grad_clip");
  c.seed = j.at("seed");
  c.save_every = j.at("save_every");
  c.val_every = j.at("val_every");
  c.mirror_augment = j.at("mirror_augment");
  return c;
}

struct TensorRef {
  std::string name;
  const Mat* value;
};

}  // namespace

std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::string> out;
  const auto ja = detail::model_config_to_json(a), jb = detail::model_config_to_json(b);
  for (const auto& [key, va] : ja.items())
    if (va != jb.at(key)) out.push_back(key + ": " + va.dump() + " vs " + jb.at(key).dump());
  return out;
}

Checkpoint make_checkpoint(const Denoiser& model, const CategorySet& cats, const NoiseSchedule& sched,
                           const TrainConfig& cfg, const TrainState& state) {
  Checkpoint c;
  c.model = model.config();
  c.categories = cats;
  c.schedule_steps = sched.steps;
  c.beta_start = sched.beta_start;
  c.beta_end = sched.beta_end;
  c.train = cfg;
  c.state = state;
  for (const auto& p : model.params().all()) c.params.emplace_back(p->name, p->value);
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<TensorRef> tensors;
  for (const auto& [name, value] : ckpt.params) tensors.push_back({name, &value});
  if (!ckpt.state.adam.m.empty() && ckpt.state.adam.m.size() != ckpt.params.size())
    throw ConfigError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < ckpt.state.adam.m.size(); ++i) {
    tensors.push_back({"adam.m." + ckpt.params[i].first, &ckpt.state.adam.m[i]});
    tensors.push_back({"adam.v." + ckpt.params[i].first, &ckpt.state.adam.v[i]});
  }

  nlohmann::json header;
  header["model"] = detail::model_config_to_json(ckpt.model);
  header["categories"] = detail::categories_to_json(ckpt.categories);
  header["schedule"] = {{"steps", ckpt.schedule_steps}, {"beta_start", ckpt.beta_start}, {"beta_end", ckpt.beta_end}};
  header["train"] = train_config_to_json(ckpt.train);
  header["state"] = {{"epoch", ckpt.state.epoch},
                     {"step", ckpt.state.step},
                     {"rng", ckpt.state.rng_state},
                     {"adam_step", ckpt.state.adam.step}};
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    header["tensors"].push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.value->size());
  }
  const std::string text = header.dump();

  std::string blob;
  blob.append(kMagic, sizeof kMagic);
  const auto version = static_cast<std::uint32_t>(kCheckpointVersion);
  const auto header_len = static_cast<std::uint64_t>(text.size());
  blob.append(reinterpret_cast<const char*>(&version), sizeof version);
  blob.append(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  blob += text;
  for (const auto& t : tensors)
    blob.append(reinterpret_cast<const char*>(t.value->data()), sizeof(double) * static_cast<std::size_t>(t.value->size()));
  detail::write_text_atomic(path, blob);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string blob = detail::read_text(path);
  const std::size_t prefix = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (blob.size() < prefix || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0)
    throw IoError(path.string() + " is not a checkpoint");
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, blob.data() + sizeof kMagic, sizeof version);
  std::memcpy(&header_len, blob.data() + sizeof kMagic + sizeof version, sizeof header_len);
  if (version != kCheckpointVersion)
    throw ConfigError("checkpoint format version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  if (blob.size() < prefix + header_len) throw IoError(path.string() + ": truncated header");

  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(blob.substr(prefix, header_len));
    c.model = detail::model_config_from_json(header.at("model"));
    c.categories = detail::categories_from_json(header.at("categories"));
    c.schedule_steps = header.at("schedule").at("steps");
    c.beta_start = header.at("schedule").at("beta_start");
    c.beta_end = header.at("schedule").at("beta_end");
    c.train = train_config_from_json(header.at("train"));
    const auto& st = header.at("state");
    c.state.epoch = st.at("epoch");
    c.state.step = st.at("step");
    c.state.rng_state = st.at("rng").get<std::string>();
    c.state.adam.step = st.at("adam_step");

    const char* data = blob.data() + prefix + header_len;
    const std::size_t available = (blob.size() - prefix - header_len) / sizeof(double);
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name");
      const Eigen::Index rows = t.at("rows"), cols = t.at("cols");
      const std::uint64_t offset = t.at("offset");
      if (offset + static_cast<std::uint64_t>(rows * cols) > available)
        throw IoError(path.string() + ": truncated tensor " + name);
      Mat m(rows, cols);
      std::memcpy(m.data(), data + offset * sizeof(double), sizeof(double) * static_cast<std::size_t>(m.size()));
      if (name.rfind("adam.m.", 0) == 0)
        c.state.adam.m.push_back(std::move(m));
      else if (name.rfind("adam.v.", 0) == 0)
        c.state.adam.v.push_back(std::move(m));
      else
        c.params.emplace_back(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed header: " + e.what());
  }
  return c;
}

void load_parameters(Denoiser& model, const Checkpoint& ckpt) {
  const auto diffs = config_differences(model.config(), ckpt.model);
  if (!diffs.empty()) {
    std::string msg = "checkpoint model config differs (model vs checkpoint):";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw ConfigError(msg);
  }
  auto& store = model.params();
  if (store.all().size() != ckpt.params.size())
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.params.size()) + " tensors, model has " +
                      std::to_string(store.all().size()));
  for (const auto& [name, value] : ckpt.params) {
    auto* p = store.find(name);
    if (!p) throw ConfigError("checkpoint tensor '" + name + "' has no counterpart in the model");
    if (p->value.rows() != value.rows() || p->value.cols() != value.cols())
      throw ConfigError("checkpoint tensor '" + name + "' has the wrong shape");
    p->value = value;
  }
}

Denoiser restore_model(const Checkpoint& ckpt) {
  Denoiser model(ckpt.model, 0);
  load_parameters(model, ckpt);
  return model;
}

}  // namespace layoutdiff
