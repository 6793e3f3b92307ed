// Command-line surface: training, inpainting, mask sampling/statistics,
// FID evaluation and the gradient-check suite.
//
// Exit codes: 0 success, 1 contract/usage errors, 2 I/O errors.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>

#include "mat/gradcheck_suite.hpp"
#include "mat/image_io.hpp"
#include "mat/train.hpp"

namespace fs = std::filesystem;
using namespace mat;

namespace {

std::vector<uint64_t> parse_seed_list(const std::string& s) {
  std::vector<uint64_t> seeds;
  size_t start = 0;
  while (start <= s.size()) {
    const size_t comma = s.find(',', start);
    const std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  check(!seeds.empty(), "--seeds: expected a comma-separated list of integers");
  return seeds;
}

std::vector<std::string> png_files_sorted(const std::string& dir) {
  std::vector<std::string> files;
  if (!fs::is_directory(dir)) throw IoError(dir + ": not a directory");
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError(dir + ": no .png files found");
  return files;
}

// embeddings of a directory of images (or a pre-extracted .matc feature file)
FeatureSet features_of(const std::string& path) {
  if (!fs::is_directory(path)) {
    return FeatureSet::from_records(read_records(path));
  }
  RandomConvExtractor<float> extractor;
  auto files = png_files_sorted(path);
  FeatureSet set;
  set.n = static_cast<int64_t>(files.size());
  set.d = RandomConvExtractor<float>::kEmbeddingDim;
  set.provenance = extractor.id() + "|" + path;
  set.data.resize(static_cast<size_t>(set.n * set.d));
  NoGradGuard ng;
  for (size_t i = 0; i < files.size(); ++i) {
    ImageF img = read_image_png(files[i]);
    std::vector<float> v(img.data.begin(), img.data.end());
    TensorF t = TensorF::from({1, 3, img.height, img.width}, std::move(v));
    TensorF emb = extractor.embedding(t);
    for (int64_t j = 0; j < set.d; ++j)
      set.data[i * static_cast<size_t>(set.d) + static_cast<size_t>(j)] =
          static_cast<double>(emb.data()[static_cast<size_t>(j)]);
  }
  return set;
}

int cmd_train(const std::string& config_path, int64_t seed_override,
              const std::string& out_override) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : train_config_from_file(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  cfg.validate();
  std::cout << "training " << dataset_kind_to_string(cfg.dataset) << " at "
            << cfg.gen.input_size << "px for " << cfg.total_samples << " samples (batch "
            << cfg.batch << ", seed " << cfg.seed << ")\n";
  Trainer trainer(cfg);
  TrainResult res = trainer.train();
  std::cout << "steps: " << res.steps << "\n";
  if (cfg.eval_cadence > 0)
    std::cout << "fid-toy: " << res.init_fid << " -> " << res.final_fid << "\n";
  std::cout << "checkpoint: " << res.final_checkpoint << "\n";
  std::cout << "metrics: " << res.metrics_csv << "\n";
  return 0;
}

int cmd_inpaint(const std::string& ckpt, const std::string& image_path,
                const std::string& mask_path, const std::string& seeds_csv,
                const std::string& out_dir) {
  auto recs = read_records(ckpt);
  TrainConfig cfg = train_config_from_map(parse_flat_config_text(find_record(recs, "config").as_string()));
  Rng init(cfg.seed);
  MatGenerator<float> gen(cfg.gen, init);
  NamedParams<float> gp = gen.params();
  for (auto& [name, t] : gp.items)
    ckptdetail::restore_tensor(find_record(recs, "param/" + name), t);

  ImageF image = read_image_png(image_path);
  BinaryMask mask = read_mask_png(mask_path);
  check(image.height == mask.height && image.width == mask.width,
        "image and mask extents differ: " + std::to_string(image.height) + "x" +
            std::to_string(image.width) + " vs " + std::to_string(mask.height) + "x" +
            std::to_string(mask.width));
  fs::create_directories(out_dir);
  for (uint64_t seed : parse_seed_list(seeds_csv)) {
    ImageF out = inpaint(gen, image, mask, seed);
    const std::string path = out_dir + "/inpaint_seed" + std::to_string(seed) + ".png";
    write_image_png(path, out);
    std::cout << path << "\n";
  }
  return 0;
}

int cmd_sample_masks(const std::string& setting, int64_t count, int64_t size, uint64_t seed,
                     const std::string& out_dir) {
  MaskSpec spec = setting == "small" ? MaskSpec::small() : MaskSpec::large();
  check(setting == "small" || setting == "large", "--setting must be small or large");
  check(count >= 1 && size >= 1, "--count and --size must be positive");
  fs::create_directories(out_dir);
  Rng rng(seed);
  for (int64_t i = 0; i < count; ++i) {
    BinaryMask m = sample_free_form_mask(spec, size, size, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "mask_%04lld.png", static_cast<long long>(i));
    write_mask_png(out_dir + "/" + name, m);
  }
  std::cout << count << " masks -> " << out_dir << "\n";
  return 0;
}

int cmd_mask_stats(const std::string& dir, const std::string& setting, int64_t count,
                   int64_t size, uint64_t seed) {
  std::vector<BinaryMask> masks;
  if (!dir.empty()) {
    for (const auto& f : png_files_sorted(dir)) masks.push_back(read_mask_png(f));
  } else {
    MaskSpec spec = setting == "small" ? MaskSpec::small() : MaskSpec::large();
    Rng rng(seed);
    for (int64_t i = 0; i < count; ++i)
      masks.push_back(sample_free_form_mask(spec, size, size, rng));
  }
  auto hist = mask_stats(masks);
  std::cout << "hole-ratio histogram over " << masks.size() << " masks:\n";
  for (int b = 0; b < 20; ++b) {
    std::printf("  [%.2f,%.2f%s %6lld\n", b * 0.05, (b + 1) * 0.05, b == 19 ? "]" : ")",
                static_cast<long long>(hist[static_cast<size_t>(b)]));
  }
  return 0;
}

int cmd_eval_fid(const std::string& real, const std::string& fake, bool ids, bool paired) {
  FeatureSet fr = features_of(real);
  FeatureSet ff = features_of(fake);
  std::cout << "fid: " << fid(fr, ff) << "\n";
  if (ids) {
    IdsResult r = pids_uids(fr, ff, paired);
    std::cout << "u-ids: " << r.u_ids << "\n";
    if (r.p_ids) std::cout << "p-ids: " << *r.p_ids << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAT-core: mask-aware transformer inpainting at desk scale"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt, image_path, mask_path, seeds_csv = "0";
  std::string setting = "large", dir, real_path, fake_path;
  int64_t seed_override = -1, count = 8, size = 64;
  uint64_t seed = 0;
  bool ids = false, paired = false;

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", config_path, "flat key=value config file");
  train_cmd->add_option("--seed", seed_override, "override the config seed");
  train_cmd->add_option("--out", out_dir, "override the output directory");

  auto* inpaint_cmd = app.add_subcommand("inpaint", "complete a masked image");
  inpaint_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  inpaint_cmd->add_option("--image", image_path, "input image (RGB png)")->required();
  inpaint_cmd->add_option("--mask", mask_path, "mask png (white = visible)")->required();
  inpaint_cmd->add_option("--seeds", seeds_csv, "comma-separated style seeds (default 0)");
  inpaint_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* masks_cmd = app.add_subcommand("sample-masks", "sample free-form masks to png");
  masks_cmd->add_option("--setting", setting, "small|large (default large)");
  masks_cmd->add_option("--count", count, "number of masks (default 8)");
  masks_cmd->add_option("--size", size, "canvas extent (default 64)");
  masks_cmd->add_option("--seed", seed, "rng seed");
  masks_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* stats_cmd = app.add_subcommand("mask-stats", "hole-ratio histogram of masks");
  stats_cmd->add_option("--dir", dir, "directory of mask pngs (else masks are sampled)");
  stats_cmd->add_option("--setting", setting, "small|large for sampling");
  stats_cmd->add_option("--count", count, "number of masks to sample");
  stats_cmd->add_option("--size", size, "canvas extent for sampling");
  stats_cmd->add_option("--seed", seed, "rng seed for sampling");

  auto* fid_cmd = app.add_subcommand("eval-fid", "FID between two image sets");
  fid_cmd->add_option("--real", real_path, "directory of pngs or .matc feature file")->required();
  fid_cmd->add_option("--fake", fake_path, "directory of pngs or .matc feature file")->required();
  fid_cmd->add_flag("--ids", ids, "also report U-IDS (and P-IDS with --paired)");
  fid_cmd->add_flag("--paired", paired, "sets correspond index-by-index");

  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference suite over all ops");

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(config_path, seed_override, out_dir);
    if (inpaint_cmd->parsed()) return cmd_inpaint(ckpt, image_path, mask_path, seeds_csv, out_dir);
    if (masks_cmd->parsed()) return cmd_sample_masks(setting, count, size, seed, out_dir);
    if (stats_cmd->parsed()) return cmd_mask_stats(dir, setting, count, size, seed);
    if (fid_cmd->parsed()) return cmd_eval_fid(real_path, fake_path, ids, paired);
    if (gc_cmd->parsed()) return report_gradcheck_suite(std::cout) ? 0 : 1;
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // prints usage/help
    return rc == 0 ? 0 : 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
