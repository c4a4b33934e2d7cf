#include "doctest.h"

#include <cmath>

#include "siammcvae/loss.hpp"
#include "siammcvae/model.hpp"
#include "testers.hpp"

using namespace siammcvae;
using testers::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.grid = PatchGrid(16, 16, 3, 8);  // N = 4
  cfg.width = 8;
  cfg.latent_width = 4;
  cfg.depth = 2;
  cfg.dec_depth = 1;
  cfg.heads_enc = 2;
  cfg.heads_dec = 2;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.heads_enc = 3;  // does not divide 8
  CHECK_THROWS_AS(cfg.validate(), ValueError);
}

TEST_CASE("attention over a single position returns V") {
  Rng rng(1);
  Tensor q = random_tensor({2, 1, 4}, rng);
  Tensor k = random_tensor({2, 1, 4}, rng);
  Tensor v = random_tensor({2, 1, 4}, rng);
  CHECK(attention_standard(q, k, v).values() == v.values());
  CHECK(attention_chunked(q, k, v, 8).values() == v.values());
}

TEST_CASE("standard and chunked kernels agree to 1e-10") {
  Rng rng(2);
  for (int n : {5, 65, 130}) {
    Tensor q = random_tensor({4, n, 8}, rng);
    Tensor k = random_tensor({4, n, 8}, rng);
    Tensor v = random_tensor({4, n, 8}, rng);
    Tensor a = attention_standard(q, k, v);
    Tensor b = attention_chunked(q, k, v, 16);
    double worst = 0;
    for (int64_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("adaptive kernel selection is logged") {
  ModelConfig cfg = tiny_config();
  cfg.kernel = AttentionKernel::adaptive;
  cfg.adaptive_threshold = 128;
  Rng rng(3);
  AttentionStats stats;

  Tensor q = random_tensor({1, 65, 8}, rng);
  attention(q, q, q, cfg, &stats);
  CHECK(stats.standard_calls == 1);
  CHECK(stats.chunked_calls == 0);

  Tensor big = random_tensor({1, 130, 8}, rng);
  attention(big, big, big, cfg, &stats);
  CHECK(stats.chunked_calls == 1);
}

TEST_CASE("attention kernels pass the gradient oracle") {
  Rng rng(4);
  for (bool chunked : {false, true}) {
    double err = testers::fd_check(
        {{2, 6, 4}, {2, 6, 4}, {2, 6, 4}},
        [&](Tape&, const std::vector<Tensor>& in) {
          Tensor out = chunked ? attention_chunked(in[0], in[1], in[2], 4)
                               : attention_standard(in[0], in[1], in[2]);
          return frobenius_sq(out);
        },
        rng);
    INFO("chunked: " << chunked);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("split/merge heads round-trip and gradients") {
  Rng rng(5);
  Tensor x = random_tensor({5, 8}, rng);
  CHECK(merge_heads(split_heads(x, 4)).values() == x.values());
  double err = testers::fd_check({{5, 8}},
                                 [](Tape&, const std::vector<Tensor>& in) {
                                   return frobenius_sq(split_heads(in[0], 2));
                                 },
                                 rng);
  CHECK(err < 1e-6);
}

TEST_CASE("shared weights: both branch code paths produce identical encodings") {
  ModelConfig cfg = tiny_config();
  Rng rng(6);
  ParamStore store = init_params(cfg, rng);
  ModelView view = bind_constants(store, cfg);

  Tensor patches = random_tensor({4, cfg.grid.patch_dim()}, rng);
  std::vector<int> keep = all_patches(4);
  Tensor u1 = siamvit_encode(patches, keep, view.enc, cfg);
  Tensor u2 = siamvit_encode(patches, keep, view.enc, cfg);
  CHECK(u1.values() == u2.values());
}

TEST_CASE("encode output shape and keep validation") {
  ModelConfig cfg;
  cfg.grid = PatchGrid(32, 32, 3, 8);  // N = 16
  cfg.width = 16;
  cfg.latent_width = 48;
  cfg.depth = 1;
  cfg.dec_depth = 1;
  cfg.heads_enc = 4;
  cfg.heads_dec = 4;
  Rng rng(7);
  ParamStore store = init_params(cfg, rng);
  ModelView view = bind_constants(store, cfg);

  Tensor patches = random_tensor({16, cfg.grid.patch_dim()}, rng);
  Tensor u = siamvit_encode(patches, all_patches(16), view.enc, cfg);
  CHECK(u.shape() == Shape{17, 48});

  Tensor sub = random_tensor({2, cfg.grid.patch_dim()}, rng);
  CHECK_THROWS_AS(siamvit_encode(sub, {3, 1}, view.enc, cfg), IndexError);
}

TEST_CASE("assemble_latent_input places embeddings and mask tokens") {
  Rng rng(8);
  const int n = 8, dp = 3;
  MaskSet mask({0, 2, 3, 5, 6, 7}, n);
  std::vector<int> vis = mask.visible();  // {1, 4}
  Tensor u1 = random_tensor({n + 1, dp}, rng);
  Tensor u2 = random_tensor({static_cast<int>(vis.size()) + 1, dp}, rng);
  Tensor token = random_tensor({dp}, rng);

  Tensor u = assemble_latent_input(u1, u2, mask, token);
  CHECK(u.shape() == Shape{n + 1, 2 * dp});

  // left block is u1; right block matches a direct scatter construction
  for (int r = 0; r < n + 1; ++r)
    for (int j = 0; j < dp; ++j) CHECK(u.at({r, j}) == u1.at({r, j}));
  CHECK(u.at({0, dp}) == u2.at({0, 0}));  // class row
  for (size_t vi = 0; vi < vis.size(); ++vi)
    for (int j = 0; j < dp; ++j)
      CHECK(u.at({vis[vi] + 1, dp + j}) == u2.at({static_cast<int>(vi) + 1, j}));
  for (int q : mask.masked)
    for (int j = 0; j < dp; ++j) CHECK(u.at({q + 1, dp + j}) == token.at({j}));
}

TEST_CASE("assemble limits: no masked patches / one visible patch") {
  Rng rng(9);
  const int n = 4, dp = 2;
  Tensor u1 = random_tensor({n + 1, dp}, rng);
  Tensor token = Tensor::full({dp}, 9.5);

  MaskSet none(std::vector<int>{}, n);
  Tensor u_all = assemble_latent_input(u1, random_tensor({n + 1, dp}, rng), none, token);
  for (int r = 0; r < n + 1; ++r)
    for (int j = 0; j < dp; ++j) CHECK(u_all.at({r, dp + j}) != 9.5);

  MaskSet most({0, 1, 3}, n);
  Tensor u2 = random_tensor({2, dp}, rng);
  Tensor u_most = assemble_latent_input(u1, u2, most, token);
  int token_rows = 0;
  for (int r = 1; r < n + 1; ++r)
    if (u_most.at({r, dp}) == 9.5 && u_most.at({r, dp + 1}) == 9.5) token_rows++;
  CHECK(token_rows == 3);
}

TEST_CASE("reparameterize contract") {
  Rng rng(10);
  const int rows = 5, dp = 3;
  ReparamView rp;
  rp.mean_w = random_tensor({dp, 2 * dp}, rng);
  rp.mean_bias = random_tensor({dp, rows}, rng);
  rp.logstd_w = random_tensor({dp, 2 * dp}, rng);
  rp.logstd_bias = random_tensor({dp, rows}, rng);
  Tensor u = random_tensor({rows, 2 * dp}, rng);

  SUBCASE("zero noise gives z = mean exactly") {
    Latent lat = reparameterize(u, rp, Tensor::zeros({rows, dp}), true);
    CHECK(lat.z.values() == lat.mean.values());
  }
  SUBCASE("disabled layer ignores noise and reports unit stddev") {
    Latent lat = reparameterize(u, rp, random_tensor({rows, dp}, rng), false);
    CHECK(lat.z.values() == lat.mean.values());
    for (double s : lat.stddev.values()) CHECK(s == 1.0);
  }
  SUBCASE("zero log-std gives unit stddev and z = mean + noise") {
    ReparamView unit = rp;
    unit.logstd_w = Tensor::zeros({dp, 2 * dp});
    unit.logstd_bias = Tensor::zeros({dp, rows});
    Tensor noise = random_tensor({rows, dp}, rng);
    Latent lat = reparameterize(u, unit, noise, true);
    for (double s : lat.stddev.values()) CHECK(s == 1.0);
    for (int64_t i = 0; i < lat.z.size(); ++i)
      CHECK(lat.z.values()[i] ==
            doctest::Approx(lat.mean.values()[i] + noise.values()[i]).epsilon(1e-15));
  }
}

TEST_CASE("decode output shape at the desk grid") {
  ModelConfig cfg;  // defaults: 64x64x3, P=8, D'=48
  Rng rng(11);
  ParamStore store = init_params(cfg, rng);
  ModelView view = bind_constants(store, cfg);
  const int n = cfg.grid.patch_count();
  Tensor z = random_tensor({n + 1, cfg.latent_width}, rng);
  Tensor u1 = random_tensor({n + 1, cfg.latent_width}, rng);
  Tensor decoded = decode(z, u1, view.dec, cfg);
  CHECK(decoded.shape() == Shape{65, 192});
}

TEST_CASE("decode with zero params reproduces the output bias") {
  ModelConfig cfg = tiny_config();
  Rng rng(12);
  ParamStore store = param_layout(cfg);  // all zeros, incl. norm gains
  int hb = store.index("dec.head_bias");
  for (auto& v : store.record(hb).values) v = rng.uniform(-1, 1);
  ModelView view = bind_constants(store, cfg);

  const int n = cfg.grid.patch_count();
  Tensor z = random_tensor({n + 1, cfg.latent_width}, rng);
  Tensor u1 = random_tensor({n + 1, cfg.latent_width}, rng);
  Tensor decoded = decode(z, u1, view.dec, cfg);
  const auto& bias = store.record(hb);  // (P^2C x N+1)
  for (int r = 0; r < n + 1; ++r)
    for (int j = 0; j < cfg.grid.patch_dim(); ++j)
      CHECK(decoded.at({r, j}) ==
            bias.values[static_cast<size_t>(j) * (n + 1) + r]);
}

TEST_CASE("decoder weight gradient passes finite differences") {
  ModelConfig cfg = tiny_config();
  Rng rng(13);
  ParamStore store = init_params(cfg, rng);
  const int n = cfg.grid.patch_count();
  Tensor z = random_tensor({n + 1, cfg.latent_width}, rng);
  Tensor u1 = random_tensor({n + 1, cfg.latent_width}, rng);

  int wi = store.index("dec.in_proj");
  const ParamRecord& w = store.record(wi);
  auto eval = [&](const std::vector<double>& values, Tape* tape, Tensor* leaf_out) {
    ParamStore s2 = store;
    s2.record(wi).values = values;
    ModelView view = tape ? bind_params(*tape, s2, cfg) : bind_constants(s2, cfg);
    if (leaf_out) *leaf_out = view.leaves[static_cast<size_t>(wi)];
    return frobenius_sq(decode(z, u1, view.dec, cfg));
  };

  Tape tape;
  Tensor leaf;
  Tensor loss = eval(w.values, &tape, &leaf);
  tape.backward(loss);
  const auto& grad = tape.grad(leaf);

  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    size_t j = static_cast<size_t>(rng.below(w.values.size()));
    const double h = 1e-5;
    auto vals = w.values;
    vals[j] += h;
    double up = eval(vals, nullptr, nullptr).value();
    vals[j] -= 2 * h;
    double down = eval(vals, nullptr, nullptr).value();
    worst = std::max(worst, testers::rel_err((up - down) / (2 * h), grad[j]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("forward: shapes, visible-row identity, determinism") {
  ModelConfig cfg = tiny_config();
  Rng rng(14);
  ParamStore store = init_params(cfg, rng);
  ModelView view = bind_constants(store, cfg);
  const int n = cfg.grid.patch_count();

  Tensor a1 = random_tensor({16, 16, 3}, rng, 0, 1);
  Tensor a2 = random_tensor({16, 16, 3}, rng, 0, 1);
  MaskSet mask({1, 3}, n);

  Rng noise_rng(77);
  Tensor noise = gaussian_noise({n + 1, cfg.latent_width}, noise_rng);
  ForwardOut out = model_forward(a1, a2, mask, view, cfg, noise);
  CHECK(out.patches.shape() == Shape{n, cfg.grid.patch_dim()});
  CHECK(out.mean.shape() == Shape{n + 1, cfg.latent_width});
  CHECK(out.stddev.shape() == Shape{n + 1, cfg.latent_width});

  // visible rows of the output equal the input patches bit-for-bit
  Tensor x2 = patchify(a2, cfg.grid, all_patches(n));
  for (int q : mask.visible())
    for (int j = 0; j < cfg.grid.patch_dim(); ++j)
      CHECK(out.patches.at({q, j}) == x2.at({q, j}));

  // identical noise: identical output
  Rng noise_rng2(77);
  Tensor noise2 = gaussian_noise({n + 1, cfg.latent_width}, noise_rng2);
  ForwardOut out2 = model_forward(a1, a2, mask, view, cfg, noise2);
  CHECK(out.patches.values() == out2.patches.values());
}

TEST_CASE("conditioning locality: visible perturbations stay visible-exact") {
  ModelConfig cfg = tiny_config();
  Rng rng(15);
  ParamStore store = init_params(cfg, rng);
  ModelView view = bind_constants(store, cfg);
  const int n = cfg.grid.patch_count();
  MaskSet mask({0, 2}, n);

  Tensor a1 = random_tensor({16, 16, 3}, rng, 0, 1);
  std::vector<double> a2v = testers::random_values(16 * 16 * 3, rng, 0, 1);
  Tensor a2 = Tensor::constant({16, 16, 3}, a2v);
  // perturb a pixel inside visible patch 1 (top-right 8x8 block)
  a2v[static_cast<size_t>((2 * 16 + 10) * 3)] += 0.25;
  Tensor a2_pert = Tensor::constant({16, 16, 3}, a2v);

  ForwardOut base = model_forward(a1, a2, mask, view, cfg, Tensor());
  ForwardOut pert = model_forward(a1, a2_pert, mask, view, cfg, Tensor());
  Tensor x2_pert = patchify(a2_pert, cfg.grid, all_patches(n));
  for (int q : mask.visible())
    for (int j = 0; j < cfg.grid.patch_dim(); ++j)
      CHECK(pert.patches.at({q, j}) == x2_pert.at({q, j}));
  // and the masked rows did change through the encoder pathway
  double diff = 0;
  for (int q : mask.masked)
    for (int j = 0; j < cfg.grid.patch_dim(); ++j)
      diff += std::abs(pert.patches.at({q, j}) - base.patches.at({q, j}));
  CHECK(diff > 0);
}

TEST_CASE("branch sequence lengths at the desk masking ratio") {
  ModelConfig cfg;  // desk grid: N = 64
  Rng rng(16);
  MaskSet mask = sample_mask(0.75, cfg.grid.patch_count(), rng);
  CHECK(mask.masked_count() == 48);
  CHECK(static_cast<int>(mask.visible().size()) + 1 == 17);
  CHECK(cfg.seq_len() == 65);
}

TEST_CASE("end-to-end gradient through the full forward at a tiny config") {
  ModelConfig cfg = tiny_config();
  Rng rng(17);
  ParamStore store = init_params(cfg, rng);
  const int n = cfg.grid.patch_count();
  MaskSet mask({0, 3}, n);
  Tensor a1 = random_tensor({16, 16, 3}, rng, 0, 1);
  Tensor a2 = random_tensor({16, 16, 3}, rng, 0, 1);
  Rng noise_rng(5);
  Tensor noise = gaussian_noise({n + 1, cfg.latent_width}, noise_rng);
  Tensor target = patchify(a2, cfg.grid, all_patches(n));

  auto loss_value = [&](const ParamStore& s) {
    ModelView view = bind_constants(s, cfg);
    ForwardOut out = model_forward(a1, a2, mask, view, cfg, noise);
    return total_loss(out.patches, target, mask, cfg.grid, out.mean, out.stddev, 0.2)
        .total.value();
  };

  Tape tape;
  ModelView view = bind_params(tape, store, cfg);
  ForwardOut out = model_forward(a1, a2, mask, view, cfg, noise);
  TotalLoss loss = total_loss(out.patches, target, mask, cfg.grid, out.mean, out.stddev, 0.2);
  tape.backward(loss.total);

  double worst = 0;
  const double h = 1e-5;
  for (int trial = 0; trial < 24; ++trial) {
    int pi = static_cast<int>(rng.below(static_cast<uint64_t>(store.count())));
    auto& rec = store.record(pi);
    size_t j = static_cast<size_t>(rng.below(rec.values.size()));
    double saved = rec.values[j];
    rec.values[j] = saved + h;
    double up = loss_value(store);
    rec.values[j] = saved - h;
    double down = loss_value(store);
    rec.values[j] = saved;
    double fd = (up - down) / (2 * h);
    double an = tape.grad(view.leaves[static_cast<size_t>(pi)])[j];
    if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8) continue;
    worst = std::max(worst, testers::rel_err(fd, an));
  }
  CHECK(worst < 1e-3);
}

TEST_SUITE_END();
