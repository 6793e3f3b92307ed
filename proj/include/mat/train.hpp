#pragma once

#include <filesystem>
#include <fstream>

#include "mat/checkpoint.hpp"
#include "mat/config.hpp"
#include "mat/metrics.hpp"

// Training harness: alternating discriminator/generator updates with Adam,
// free-form masks, periodic toy-FID evaluation and checkpointing. Everything
// is a deterministic function of (config, seed) within one build.

namespace mat {

struct StepReport {
  int64_t step = 0;     // completed optimizer steps
  int64_t samples = 0;  // images consumed so far
  float d_adv = 0;
  float g_adv = 0;
  float r1 = 0;
  float perc = 0;
};

struct TrainResult {
  double init_fid = 0;
  double final_fid = 0;
  int64_t steps = 0;
  std::string final_checkpoint;
  std::string metrics_csv;
};

template <typename T = float>
Tensor<T> masks_to_tensor(const std::vector<BinaryMask>& masks) {
  const int64_t b = static_cast<int64_t>(masks.size());
  const int64_t h = masks[0].height, w = masks[0].width;
  std::vector<T> data(static_cast<size_t>(b * h * w));
  for (int64_t i = 0; i < b; ++i)
    for (int64_t k = 0; k < h * w; ++k)
      data[static_cast<size_t>(i * h * w + k)] =
          static_cast<T>(masks[static_cast<size_t>(i)].valid[static_cast<size_t>(k)]);
  return Tensor<T>::from({b, 1, h, w}, std::move(data));
}

class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg)
      : cfg_(cfg),
        init_rng_(cfg.seed),
        gen_(cfg.gen, init_rng_),
        disc_(cfg.gen, init_rng_),
        g_params_(gen_.params()),
        rng_data_(splitmix64(cfg.seed ^ 0xDA7Aull)),
        rng_model_(splitmix64(cfg.seed ^ 0x30DE1ull)),
        dataset_{cfg.dataset, cfg.gen.input_size, cfg.seed} {
    cfg_.validate();
    disc_.params("d", d_params_);
    opt_g_ = Adam<float>(g_params_, cfg.lr, cfg.beta1, cfg.beta2);
    opt_d_ = Adam<float>(d_params_, cfg.lr, cfg.beta1, cfg.beta2);
  }

  // One discriminator update followed by one generator update on a fresh
  // batch. RNG consumption order is fixed: indices, masks, style noise, then
  // everything the forward pass draws internally.
  StepReport train_step() {
    const int64_t b = cfg_.batch;
    const int64_t s = cfg_.gen.input_size;

    std::vector<int64_t> indices(static_cast<size_t>(b));
    for (auto& i : indices) i = rng_data_.uniform_int(0, kTrainIndexRange - 1);
    std::vector<BinaryMask> masks;
    masks.reserve(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i)
      masks.push_back(sample_free_form_mask(cfg_.mask_spec, s, s, rng_data_));

    Tensor<float> real = dataset_.batch(indices);
    Tensor<float> mask = masks_to_tensor<float>(masks);
    Tensor<float> noise = TensorF::randn({b, cfg_.gen.style_dim}, rng_model_);

    auto out = gen_.forward(real, mask, noise, rng_model_);

    StepReport rep;
    rep.step = steps_done_ + 1;

    // ---- discriminator update (adversarial on both stage outputs + R1)
    opt_d_.zero_grad();
    opt_g_.zero_grad();
    Tensor<float> logits_real = disc_.forward(real, mask);
    Tensor<float> logits_f1 = disc_.forward(out.coarse_composed.detach(), mask);
    Tensor<float> logits_f2 = disc_.forward(out.composed.detach(), mask);
    Tensor<float> d_adv =
        add(mean(softplus(neg(logits_real))),
            scale(add(mean(softplus(logits_f1)), mean(softplus(logits_f2))), 0.5f));
    Tensor<float> r1 = TensorF::zeros({});
    if ((steps_done_ % cfg_.r1_interval) == 0) {
      auto dfn = [&](const Tensor<float>& x) { return disc_.forward(x, mask); };
      r1 = r1_penalty<float>(dfn, real, cfg_.r1_mode);
    }
    Tensor<float> d_total = total_d_loss(d_adv, r1, cfg_.weights);
    d_total.backward();
    opt_d_.step();

    // ---- generator update against the refreshed discriminator
    opt_d_.zero_grad();
    opt_g_.zero_grad();
    Tensor<float> adv1 = g_loss(disc_.forward(out.coarse_composed, mask));
    Tensor<float> adv2 = g_loss(disc_.forward(out.composed, mask));
    Tensor<float> perc = perceptual_loss<float>(out.composed, real, extractor_, cfg_.weights.eta);
    Tensor<float> g_total = total_g_loss(adv1, adv2, perc, cfg_.weights);
    g_total.backward();
    opt_g_.step();

    rep.d_adv = static_cast<float>(d_adv.item());
    rep.g_adv = 0.5f * (static_cast<float>(adv1.item()) + static_cast<float>(adv2.item()));
    rep.r1 = static_cast<float>(r1.item());
    rep.perc = static_cast<float>(perc.item());
    ++steps_done_;
    samples_seen_ += b;
    rep.samples = samples_seen_;

    if (!std::isfinite(rep.d_adv) || !std::isfinite(rep.g_adv) || !std::isfinite(rep.r1) ||
        !std::isfinite(rep.perc))
      throw NumericalError("train_step: non-finite loss at sample " +
                           std::to_string(samples_seen_) + "; last good checkpoint: " +
                           (last_checkpoint_.empty() ? "<none>" : last_checkpoint_));
    return rep;
  }

  // Toy FID between held-out synthetic images and their completions, over a
  // fixed evaluation protocol independent of the training RNG streams.
  double eval_fid() {
    NoGradGuard ng;
    const int64_t n = cfg_.eval_count;
    const int64_t s = cfg_.gen.input_size;
    Rng eval_rng(splitmix64(cfg_.seed ^ 0xE7A1ull));
    const int64_t ed = RandomConvExtractor<float>::kEmbeddingDim;
    FeatureSet real_set, fake_set;
    real_set.d = fake_set.d = ed;
    real_set.n = fake_set.n = n;
    real_set.provenance = extractor_.id() + "|" + dataset_kind_to_string(cfg_.dataset) + "|real";
    fake_set.provenance = extractor_.id() + "|" + dataset_kind_to_string(cfg_.dataset) + "|fake";
    real_set.data.resize(static_cast<size_t>(n * ed));
    fake_set.data.resize(static_cast<size_t>(n * ed));

    for (int64_t start = 0; start < n; start += cfg_.batch) {
      const int64_t bs = std::min(cfg_.batch, n - start);
      std::vector<int64_t> indices(static_cast<size_t>(bs));
      for (int64_t i = 0; i < bs; ++i)
        indices[static_cast<size_t>(i)] = kEvalIndexBase + start + i;
      std::vector<BinaryMask> masks;
      for (int64_t i = 0; i < bs; ++i)
        masks.push_back(sample_free_form_mask(cfg_.mask_spec, s, s, eval_rng));
      Tensor<float> real = dataset_.batch(indices);
      Tensor<float> mask = masks_to_tensor<float>(masks);
      Tensor<float> noise = TensorF::randn({bs, cfg_.gen.style_dim}, eval_rng);
      auto out = gen_.forward(real, mask, noise, eval_rng);
      Tensor<float> emb_real = extractor_.embedding(real);
      Tensor<float> emb_fake = extractor_.embedding(out.composed);
      for (int64_t i = 0; i < bs; ++i)
        for (int64_t j = 0; j < ed; ++j) {
          real_set.data[static_cast<size_t>((start + i) * ed + j)] =
              static_cast<double>(emb_real.data()[static_cast<size_t>(i * ed + j)]);
          fake_set.data[static_cast<size_t>((start + i) * ed + j)] =
              static_cast<double>(emb_fake.data()[static_cast<size_t>(i * ed + j)]);
        }
    }
    return fid(real_set, fake_set);
  }

  // Full loop: periodic evaluation rows (step,d_loss,g_loss,r1,perc,fid_toy)
  // and checkpoints, ending with a final checkpoint.
  TrainResult train() {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    TrainResult result;
    result.metrics_csv = cfg_.out_dir + "/metrics.csv";
    std::ofstream csv(result.metrics_csv, resumed_ ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot open metrics log: " + result.metrics_csv);
    if (!resumed_) csv << "step,d_loss,g_loss,r1,perc,fid_toy\n";

    const bool do_eval = cfg_.eval_cadence > 0;
    if (do_eval) result.init_fid = eval_fid();

    StepReport last{};
    int64_t next_eval = cfg_.eval_cadence > 0
                            ? (samples_seen_ / cfg_.eval_cadence + 1) * cfg_.eval_cadence
                            : 0;
    int64_t next_ckpt = cfg_.ckpt_cadence > 0
                            ? (samples_seen_ / cfg_.ckpt_cadence + 1) * cfg_.ckpt_cadence
                            : 0;
    while (samples_seen_ < cfg_.total_samples) {
      last = train_step();
      if (do_eval && samples_seen_ >= next_eval) {
        const double f = eval_fid();
        csv << last.samples << ',' << last.d_adv << ',' << last.g_adv << ',' << last.r1 << ','
            << last.perc << ',' << f << '\n';
        csv.flush();
        next_eval += cfg_.eval_cadence;
        result.final_fid = f;
      }
      if (cfg_.ckpt_cadence > 0 && samples_seen_ >= next_ckpt) {
        save(cfg_.out_dir + "/ckpt_" + std::to_string(samples_seen_) + ".matc");
        next_ckpt += cfg_.ckpt_cadence;
      }
    }
    if (do_eval) result.final_fid = eval_fid();
    result.steps = steps_done_;
    result.final_checkpoint = cfg_.out_dir + "/ckpt_final.matc";
    save(result.final_checkpoint);
    return result;
  }

  void save(const std::string& path) {
    TrainCheckpoint<float> st{&g_params_, &d_params_, &opt_g_, &opt_d_,
                              &rng_data_, &rng_model_, &samples_seen_};
    save_checkpoint(path, st, config_to_string(cfg_));
    last_checkpoint_ = path;
  }

  void load(const std::string& path) {
    TrainCheckpoint<float> st{&g_params_, &d_params_, &opt_g_, &opt_d_,
                              &rng_data_, &rng_model_, &samples_seen_};
    load_checkpoint(path, st);
    steps_done_ = opt_g_.step_count();
    last_checkpoint_ = path;
    resumed_ = true;
  }

  const TrainConfig& config() const { return cfg_; }
  MatGenerator<float>& generator() { return gen_; }
  Discriminator<float>& discriminator() { return disc_; }
  int64_t samples_seen() const { return samples_seen_; }

 private:
  static constexpr int64_t kTrainIndexRange = 1 << 20;
  static constexpr int64_t kEvalIndexBase = int64_t{1} << 32;

  TrainConfig cfg_;
  Rng init_rng_;
  MatGenerator<float> gen_;
  Discriminator<float> disc_;
  NamedParams<float> g_params_;
  NamedParams<float> d_params_;
  Adam<float> opt_g_;
  Adam<float> opt_d_;
  Rng rng_data_;
  Rng rng_model_;
  SyntheticDataset dataset_;
  RandomConvExtractor<float> extractor_;
  int64_t steps_done_ = 0;
  int64_t samples_seen_ = 0;
  std::string last_checkpoint_;
  bool resumed_ = false;
};

}  // namespace mat
