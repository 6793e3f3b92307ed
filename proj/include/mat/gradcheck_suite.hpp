#pragma once

#include <ostream>

#include "mat/generator.hpp"
#include "mat/gradcheck.hpp"
#include "mat/losses.hpp"

// The named finite-difference suite: every differentiable primitive plus the
// composite blocks, each checked in f64 against central differences. Backs
// both the acceptance gate and the `gradcheck` CLI subcommand.

namespace mat {

struct GradcheckCase {
  std::string name;
  double tol;
  GradcheckReport report;
};

inline std::vector<GradcheckCase> run_gradcheck_suite() {
  std::vector<GradcheckCase> cases;
  auto run = [&](const std::string& name, double tol,
                 const std::function<Tensor<double>(const std::vector<TensorD>&)>& fn,
                 std::vector<TensorD> inputs, int64_t max_coords = 64) {
    cases.push_back({name, tol, gradcheck(fn, std::move(inputs), tol, 1e-5, max_coords)});
  };
  auto randt = [](const Shape& s, uint64_t seed) {
    Rng rng(seed);
    return TensorD::randn(s, rng);
  };
  auto randu = [](const Shape& s, uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    return TensorD::uniform(s, rng, lo, hi);
  };

  // ---- elementwise primitives (5 instances each via differing seeds)
  for (uint64_t i = 0; i < 5; ++i) {
    const Shape s{3, 4};
    run("add#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return add(in[0], in[1]); },
        {randt(s, 10 + i), randt(s, 20 + i)});
    run("sub#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return sub(in[0], in[1]); },
        {randt(s, 30 + i), randt(s, 40 + i)});
    run("mul#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return mul(in[0], in[1]); },
        {randt(s, 50 + i), randt(s, 60 + i)});
    run("div#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) {
          return divide(in[0], add_scalar(mul(in[1], in[1]), 0.5));
        },
        {randt(s, 70 + i), randt(s, 80 + i)});
  }
  for (uint64_t i = 0; i < 5; ++i) {
    const Shape s{4, 3};
    run("exp#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return exp(in[0]); }, {randt(s, 100 + i)});
    run("log#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return log(add_scalar(abs(in[0]), 1.0)); },
        {randt(s, 110 + i)});
    run("sqrt#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return sqrt(add_scalar(abs(in[0]), 1.0)); },
        {randt(s, 120 + i)});
    run("tanh#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return tanh(in[0]); }, {randt(s, 130 + i)});
    run("erf#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return erf(in[0]); }, {randt(s, 140 + i)});
    run("sigmoid#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return sigmoid(in[0]); }, {randt(s, 150 + i)});
    run("softplus#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return softplus(in[0]); }, {randt(s, 160 + i)});
    run("gelu#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return gelu(in[0]); }, {randt(s, 170 + i)});
    TensorD away = randt(s, 180 + i);
    for (auto& v : away.data())
      if (std::abs(v) < 0.05) v += 0.2;  // keep clear of the kink
    run("leaky_relu#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return leaky_relu(in[0], 0.2); }, {away});
    TensorD away2 = randt(s, 190 + i);
    for (auto& v : away2.data())
      if (std::abs(v) < 0.05) v += 0.2;
    run("abs#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return abs(in[0]); }, {away2});
  }

  // ---- shape / index / reduction primitives
  for (uint64_t i = 0; i < 5; ++i) {
    const Shape s{2, 3, 4};
    run("reshape#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return reshape(in[0], {4, 6}); }, {randt(s, 200 + i)});
    run("permute#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return permute(in[0], {2, 0, 1}); },
        {randt(s, 210 + i)});
    run("slice#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return slice(in[0], 1, 1, 2); }, {randt(s, 220 + i)});
    run("embed_slice#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return embed_slice(in[0], 1, 2, 7); },
        {randt(s, 230 + i)});
    run("concat#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return concat<double>({in[0], in[1]}, 2); },
        {randt(s, 240 + i), randt(s, 250 + i)});
    run("expand#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return expand(slice(in[0], 0, 0, 1), {5, 3, 4}); },
        {randt(s, 260 + i)});
    run("sum#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return sum(in[0], {0, 2}, false); },
        {randt(s, 270 + i)});
    run("mean#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return mean(in[0], {1}, true); },
        {randt(s, 280 + i)});
    run("index_select#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) {
          return index_select(in[0], 1, std::vector<int64_t>{2, 0, 0, 1});
        },
        {randt(s, 290 + i)});
    run("softmax#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return softmax(in[0], -1); }, {randt(s, 300 + i)});
  }

  // ---- matmul / conv family / resampling
  for (uint64_t i = 0; i < 5; ++i) {
    run("matmul#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return matmul(in[0], in[1]); },
        {randt({4, 5}, 310 + i), randt({5, 3}, 320 + i)});
    run("matmul_batched#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return matmul(in[0], in[1]); },
        {randt({2, 3, 4, 5}, 330 + i), randt({1, 5, 2}, 340 + i)});
    run("conv2d_s1#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
        {randt({2, 3, 5, 5}, 350 + i), randt({4, 3, 3, 3}, 360 + i), randt({4}, 370 + i)});
    run("conv2d_s2#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return conv2d(in[0], in[1], 2, 1); },
        {randt({1, 2, 6, 6}, 380 + i), randt({3, 2, 3, 3}, 390 + i)});
    run("conv2d_transposed#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return conv2d_transposed(in[0], in[1], 2, 1); },
        {randt({1, 3, 4, 4}, 400 + i), randt({3, 2, 3, 3}, 410 + i)});
    run("upsample_nearest#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return upsample_nearest2x(in[0]); },
        {randt({1, 2, 3, 3}, 420 + i)});
    run("upsample_bilinear#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) { return upsample_bilinear(in[0], 5, 7); },
        {randt({1, 2, 3, 3}, 430 + i)});
  }

  // ---- style primitives
  for (uint64_t i = 0; i < 5; ++i) {
    run("modulate_demodulate#" + std::to_string(i), 1e-4,
        [](const std::vector<TensorD>& in) {
          return modulate_demodulate(in[0], add_scalar(mul(in[1], in[1]), 0.3), 1e-8);
        },
        {randt({3, 2, 3, 3}, 440 + i), randt({2}, 450 + i)});
    run("noise_injection#" + std::to_string(i), 1e-4,
        [i](const std::vector<TensorD>& in) {
          Rng fixed(1000 + i);
          return noise_injection(in[0], in[1], fixed);
        },
        {randt({2, 3, 4, 4}, 460 + i), randt({1}, 470 + i)});
  }

  // ---- composite blocks
  {
    Rng rng(501);
    AttentionConfig<double> cfg{8, 2, 2, 100.0};
    Mca<double> mca_mod(cfg, rng);
    TokenMask tm(4, 4, 0);
    tm.at(0, 0) = tm.at(2, 1) = tm.at(3, 3) = 1;
    run("mca", 1e-4,
        [&](const std::vector<TensorD>& in) {
          Mca<double> local = mca_mod;
          local.to_q.weight = in[1];
          local.to_v.weight = in[2];
          auto [out, upd] = local.forward(in[0], {tm}, false);
          return out;
        },
        {randt({1, 16, 8}, 502), mca_mod.to_q.weight.detach(), mca_mod.to_v.weight.detach()});

    AdjustedBlock<double> blk(cfg, 2, rng);
    run("adjusted_block", 1e-4,
        [&](const std::vector<TensorD>& in) {
          AdjustedBlock<double> local = blk;
          local.fuse.weight = in[1];
          local.mlp_in.weight = in[2];
          auto [out, upd] = local.forward(in[0], {tm}, false);
          return out;
        },
        {randt({1, 16, 8}, 503), blk.fuse.weight.detach(), blk.mlp_in.weight.detach()});

    TransformerStage<double> stage(cfg, 2, 2, rng);
    run("stage", 1e-3,
        [&](const std::vector<TensorD>& in) {
          TransformerStage<double> local = stage;
          local.conv.weight = in[1];
          local.blocks[0].mca.to_k.weight = in[2];
          auto [out, upd] = local.forward(in[0], {tm});
          return out;
        },
        {randt({1, 16, 8}, 504), stage.conv.weight.detach(),
         stage.blocks[0].mca.to_k.weight.detach()},
        24);

    ConvHead<double> head(4, rng);
    run("conv_head", 1e-4,
        [&](const std::vector<TensorD>& in) {
          ConvHead<double> local = head;
          local.lift.weight = in[1];
          local.down2.weight = in[2];
          return local.forward(in[0]).tokens;
        },
        {randt({1, 4, 16, 16}, 505), head.lift.weight.detach(), head.down2.weight.detach()}, 24);

    LinearProjectionHead<double> lp(6, rng);
    run("linear_projection_head", 1e-4,
        [&](const std::vector<TensorD>& in) {
          LinearProjectionHead<double> local = lp;
          local.proj.weight = in[1];
          return local.forward(in[0]);
        },
        {randt({1, 4, 16, 16}, 506), lp.proj.weight.detach()}, 24);

    MappingNetwork<double> mapping(6, rng);
    run("mapping_network", 1e-4,
        [&](const std::vector<TensorD>& in) {
          MappingNetwork<double> local = mapping;
          local.layers[0].weight = in[1];
          local.layers[7].weight = in[2];
          return local.forward(in[0]);
        },
        {randt({2, 6}, 507), mapping.layers[0].weight.detach(),
         mapping.layers[7].weight.detach()});

    StylePipeline<double> pipe(6, 6, 0.5, rng);
    run("style_pipeline", 1e-4,
        [&](const std::vector<TensorD>& in) {
          StylePipeline<double> local = pipe;
          local.fuse.weight = in[2];
          Rng fixed(508);
          return local.forward(in[0], in[1], fixed);
        },
        {randt({1, 6}, 509), randt({1, 6, 8, 8}, 510), pipe.fuse.weight.detach()}, 24);

    ModulatedConv2d<double> mconv(3, 4, 3, 5, rng);
    run("modulated_conv", 1e-4,
        [&](const std::vector<TensorD>& in) {
          ModulatedConv2d<double> local = mconv;
          local.weight = in[1];
          local.affine.weight = in[2];
          return local.forward(in[0], in[3], nullptr);
        },
        {randt({2, 3, 4, 4}, 511), mconv.weight.detach(), mconv.affine.weight.detach(),
         randt({2, 5}, 512)});
  }

  // ---- discriminator micro-config and the R1 double-backward path
  {
    Rng rng(601);
    GeneratorConfig<double> cfg = GeneratorConfig<double>::micro();
    Discriminator<double> disc(cfg, rng);
    TensorD mask = TensorD::ones({1, 1, 64, 64});
    run("discriminator_micro", 1e-3,
        [&](const std::vector<TensorD>& in) {
          Discriminator<double> local = disc;
          local.from_rgb.weight = in[1];
          local.blocks[1].conv1.weight = in[2];
          local.fc_out.weight = in[3];
          return local.forward(in[0], mask);
        },
        {randu({1, 3, 64, 64}, 602, -0.9, 0.9), disc.from_rgb.weight.detach(),
         disc.blocks[1].conv1.weight.detach(), disc.fc_out.weight.detach()},
        12);

    TensorD x_real = randu({2, 2, 6, 6}, 603, -1.0, 1.0);
    run("r1_double_backward", 1e-3,
        [&](const std::vector<TensorD>& in) {
          auto dfn = [&](const TensorD& x) {
            TensorD h = leaky_relu(conv2d(x, in[0], 2, 1));
            return reshape(conv2d(h, in[1], 1, 0), Shape{x.dim(0), 1});
          };
          return r1_penalty<double>(dfn, x_real, R1Mode::kSquaredHalf);
        },
        {randt({3, 2, 3, 3}, 604), randt({1, 3, 3, 3}, 605)});
  }

  // ---- loss surfaces
  {
    run("g_loss", 1e-4, [](const std::vector<TensorD>& in) { return g_loss(in[0]); },
        {randu({5, 1}, 701, -3, 3)});
    run("d_loss", 1e-4,
        [](const std::vector<TensorD>& in) { return d_loss(in[0], in[1]); },
        {randu({5, 1}, 702, -3, 3), randu({5, 1}, 703, -3, 3)});
    RandomConvExtractor<double> ex;
    run("perceptual_loss", 1e-4,
        [&](const std::vector<TensorD>& in) {
          return perceptual_loss<double>(in[0], in[1], ex, {0.25, 0.5});
        },
        {randu({1, 3, 8, 8}, 704, -1, 1), randu({1, 3, 8, 8}, 705, -1, 1)});
  }

  return cases;
}

inline bool report_gradcheck_suite(std::ostream& os) {
  auto cases = run_gradcheck_suite();
  bool all_pass = true;
  double worst = 0;
  std::string worst_name;
  for (const auto& c : cases) {
    if (!c.report.pass) {
      os << "FAIL " << c.name << "  max rel err " << c.report.max_rel_err << " (tol " << c.tol
         << ")\n";
      all_pass = false;
    }
    if (c.report.max_rel_err > worst) {
      worst = c.report.max_rel_err;
      worst_name = c.name;
    }
  }
  os << (all_pass ? "gradcheck: all " : "gradcheck: FAILURES among ") << cases.size()
     << " checks passed; worst rel err " << worst << " (" << worst_name << ")\n";
  return all_pass;
}

}  // namespace mat
