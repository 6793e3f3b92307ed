#pragma once

#include <fstream>
#include <map>

#include "mat/dataset.hpp"
#include "mat/generator.hpp"
#include "mat/losses.hpp"

// Flat key=value configuration (INI-style, '#' comments). Every key is
// documented in the README; unknown keys are rejected to catch typos.

namespace mat {

struct TrainConfig {
  GeneratorConfig<float> gen = GeneratorConfig<float>::tiny();
  LossWeights<float> weights;
  int64_t batch = 8;
  int64_t total_samples = 20000;
  float lr = 1e-3f;
  float beta1 = 0.0f;
  float beta2 = 0.99f;
  uint64_t seed = 0;
  DatasetKind dataset = DatasetKind::kStripes;
  MaskSpec mask_spec = MaskSpec::large();
  int64_t eval_cadence = 2000;  // samples between FID-toy rows; 0 disables
  int64_t eval_count = 128;
  int64_t ckpt_cadence = 10000;  // samples between checkpoints; 0 = final only
  R1Mode r1_mode = R1Mode::kSquaredHalf;
  int64_t r1_interval = 1;
  std::string out_dir = "out";

  void validate() const {
    gen.validate();
    weights.validate();
    check(batch >= 1, "TrainConfig: batch must be >= 1");
    check(total_samples >= 0, "TrainConfig: total_samples must be >= 0");
    check(lr > 0, "TrainConfig: lr must be positive");
    check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "TrainConfig: bad Adam betas");
    check(eval_cadence >= 0 && eval_count >= 33,
          "TrainConfig: eval_count must cover the embedding dim (>= 33)");
    check(ckpt_cadence >= 0, "TrainConfig: bad ckpt_cadence");
    check(r1_interval >= 1, "TrainConfig: r1_interval must be >= 1");
  }
};

inline std::map<std::string, std::string> parse_flat_config_text(const std::string& text,
                                                                 const std::string& origin = "<config>") {
  std::istringstream is(text);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r\n";
    const size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    const size_t b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos,
          origin + ":" + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline std::map<std::string, std::string> parse_flat_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_flat_config_text(buf.str(), path);
}

namespace cfgdetail {

inline int64_t to_i64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    check(pos == v.size(), "");
    return r;
  } catch (...) {
    throw ContractError("config key " + key + ": not an integer: '" + v + "'");
  }
}

inline double to_f64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    check(pos == v.size(), "");
    return r;
  } catch (...) {
    throw ContractError("config key " + key + ": not a number: '" + v + "'");
  }
}

inline std::array<int64_t, 5> to_list5(const std::string& key, const std::string& v) {
  std::array<int64_t, 5> out{};
  size_t start = 0;
  for (int i = 0; i < 5; ++i) {
    const size_t comma = v.find(',', start);
    const bool last = i == 4;
    check(last ? comma == std::string::npos : comma != std::string::npos,
          "config key " + key + ": expected 5 comma-separated integers, got '" + v + "'");
    out[static_cast<size_t>(i)] =
        to_i64(key, v.substr(start, last ? std::string::npos : comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace cfgdetail

inline TrainConfig train_config_from_map(const std::map<std::string, std::string>& kv) {
  using namespace cfgdetail;
  TrainConfig cfg;
  for (const auto& [key, value] : kv) {
    if (key == "dataset") cfg.dataset = dataset_kind_from_string(value);
    else if (key == "image_size") cfg.gen.input_size = to_i64(key, value);
    else if (key == "embed_dim") cfg.gen.embed_dim = to_i64(key, value);
    else if (key == "num_heads") cfg.gen.num_heads = to_i64(key, value);
    else if (key == "blocks") cfg.gen.block_counts = to_list5(key, value);
    else if (key == "windows") cfg.gen.windows = to_list5(key, value);
    else if (key == "mlp_ratio") cfg.gen.mlp_ratio = to_i64(key, value);
    else if (key == "style_dim") cfg.gen.style_dim = to_i64(key, value);
    else if (key == "unet_base") cfg.gen.unet_base = to_i64(key, value);
    else if (key == "unet_max") cfg.gen.unet_max = to_i64(key, value);
    else if (key == "disc_base") cfg.gen.disc_base = to_i64(key, value);
    else if (key == "disc_max") cfg.gen.disc_max = to_i64(key, value);
    else if (key == "tokenization") {
      if (value == "stacked_conv") cfg.gen.tokenization = Tokenization::kStackedConv;
      else if (value == "linear_projection") cfg.gen.tokenization = Tokenization::kLinearProjection;
      else throw ContractError("config key tokenization: '" + value +
                               "' (expected stacked_conv|linear_projection)");
    }
    else if (key == "style_p") cfg.gen.style_p = to_f64(key, value);
    else if (key == "tau") cfg.gen.tau = static_cast<float>(to_f64(key, value));
    else if (key == "demod_eps") cfg.gen.demod_eps = static_cast<float>(to_f64(key, value));
    else if (key == "batch") cfg.batch = to_i64(key, value);
    else if (key == "total_samples") cfg.total_samples = to_i64(key, value);
    else if (key == "lr") cfg.lr = static_cast<float>(to_f64(key, value));
    else if (key == "beta1") cfg.beta1 = static_cast<float>(to_f64(key, value));
    else if (key == "beta2") cfg.beta2 = static_cast<float>(to_f64(key, value));
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_i64(key, value));
    else if (key == "mask_setting") {
      if (value == "small") cfg.mask_spec = MaskSpec::small();
      else if (value == "large") cfg.mask_spec = MaskSpec::large();
      else throw ContractError("config key mask_setting: '" + value + "' (expected small|large)");
    }
    else if (key == "eval_cadence") cfg.eval_cadence = to_i64(key, value);
    else if (key == "eval_count") cfg.eval_count = to_i64(key, value);
    else if (key == "ckpt_cadence") cfg.ckpt_cadence = to_i64(key, value);
    else if (key == "gamma_r1") cfg.weights.gamma = static_cast<float>(to_f64(key, value));
    else if (key == "lambda_perc") cfg.weights.lambda = static_cast<float>(to_f64(key, value));
    else if (key == "r1_mode") {
      if (value == "squared") cfg.r1_mode = R1Mode::kSquaredHalf;
      else if (value == "norm") cfg.r1_mode = R1Mode::kNorm;
      else throw ContractError("config key r1_mode: '" + value + "' (expected squared|norm)");
    }
    else if (key == "r1_interval") cfg.r1_interval = to_i64(key, value);
    else if (key == "out_dir") cfg.out_dir = value;
    else throw ContractError("unknown config key: " + key);
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig train_config_from_file(const std::string& path) {
  return train_config_from_map(parse_flat_config(path));
}

// serialization mirror of train_config_from_map (checkpoints embed this so
// inference can rebuild the exact architecture)
inline std::string config_to_string(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "dataset = " << dataset_kind_to_string(c.dataset) << "\n";
  os << "image_size = " << c.gen.input_size << "\n";
  os << "embed_dim = " << c.gen.embed_dim << "\n";
  os << "num_heads = " << c.gen.num_heads << "\n";
  os << "blocks = ";
  for (int i = 0; i < 5; ++i) os << c.gen.block_counts[static_cast<size_t>(i)] << (i < 4 ? "," : "\n");
  os << "windows = ";
  for (int i = 0; i < 5; ++i) os << c.gen.windows[static_cast<size_t>(i)] << (i < 4 ? "," : "\n");
  os << "mlp_ratio = " << c.gen.mlp_ratio << "\n";
  os << "style_dim = " << c.gen.style_dim << "\n";
  os << "unet_base = " << c.gen.unet_base << "\n";
  os << "unet_max = " << c.gen.unet_max << "\n";
  os << "disc_base = " << c.gen.disc_base << "\n";
  os << "disc_max = " << c.gen.disc_max << "\n";
  os << "tokenization = "
     << (c.gen.tokenization == Tokenization::kStackedConv ? "stacked_conv" : "linear_projection")
     << "\n";
  os << "style_p = " << c.gen.style_p << "\n";
  os << "tau = " << c.gen.tau << "\n";
  os << "demod_eps = " << c.gen.demod_eps << "\n";
  os << "batch = " << c.batch << "\n";
  os << "total_samples = " << c.total_samples << "\n";
  os << "lr = " << c.lr << "\n";
  os << "beta1 = " << c.beta1 << "\n";
  os << "beta2 = " << c.beta2 << "\n";
  os << "seed = " << c.seed << "\n";
  os << "mask_setting = " << (c.mask_spec.setting == MaskSetting::kSmall ? "small" : "large")
     << "\n";
  os << "eval_cadence = " << c.eval_cadence << "\n";
  os << "eval_count = " << c.eval_count << "\n";
  os << "ckpt_cadence = " << c.ckpt_cadence << "\n";
  os << "gamma_r1 = " << c.weights.gamma << "\n";
  os << "lambda_perc = " << c.weights.lambda << "\n";
  os << "r1_mode = " << (c.r1_mode == R1Mode::kSquaredHalf ? "squared" : "norm") << "\n";
  os << "r1_interval = " << c.r1_interval << "\n";
  os << "out_dir = " << c.out_dir << "\n";
  return os.str();
}

}  // namespace mat
