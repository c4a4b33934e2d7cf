#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "siammcvae/train.hpp"

namespace fs = std::filesystem;

namespace siammcvae {

// ------------------------------------------------------------------ adam --

void adam_init(AdamState& state, const ParamStore& params) {
  state.t = 0;
  state.m.assign(static_cast<size_t>(params.count()), {});
  state.v.assign(static_cast<size_t>(params.count()), {});
  for (int i = 0; i < params.count(); ++i) {
    size_t n = params.record(i).values.size();
    state.m[static_cast<size_t>(i)].assign(n, 0.0);
    state.v[static_cast<size_t>(i)].assign(n, 0.0);
  }
}

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const OptimConfig& cfg) {
  if (static_cast<int>(grads.size()) != params.count() ||
      static_cast<int>(state.m.size()) != params.count())
    throw ShapeError("adam_step: gradient/state count mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (int i = 0; i < params.count(); ++i) {
    auto& p = params.record(i).values;
    const auto& g = grads[static_cast<size_t>(i)];
    auto& m = state.m[static_cast<size_t>(i)];
    auto& v = state.v[static_cast<size_t>(i)];
    if (g.size() != p.size()) throw ShapeError("adam_step: gradient shape mismatch");
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------- config --

void TrainConfig::validate() const {
  model.validate();
  if (beta < 0) throw ValueError("config: beta must be non-negative");
  if (!(mask_ratio > 0 && mask_ratio < 1)) throw ValueError("config: mask_ratio must be in (0,1)");
  if (frame_gap < 1) throw ValueError("config: frame_gap must be at least 1");
  if (optim.lr <= 0 || optim.eps <= 0) throw ValueError("config: bad optimizer hyperparameters");
  if (!(optim.beta1 >= 0 && optim.beta1 < 1) || !(optim.beta2 >= 0 && optim.beta2 < 1))
    throw ValueError("config: moment decays must lie in [0,1)");
  if (batch_size < 1 || steps < 1) throw ValueError("config: batch_size and steps must be positive");
  if (workers < 0) throw ValueError("config: workers must be non-negative");
  if (checkpoint_every < 1) throw ValueError("config: checkpoint_every must be positive");
}

ConfigMap train_config_to_map(const TrainConfig& cfg) {
  ConfigMap m;
  m.set_int("frame_height", cfg.model.grid.height);
  m.set_int("frame_width", cfg.model.grid.width);
  m.set_int("channels", cfg.model.grid.channels);
  m.set_int("patch_size", cfg.model.grid.patch);
  m.set_int("width", cfg.model.width);
  m.set_int("latent_width", cfg.model.latent_width);
  m.set_int("depth", cfg.model.depth);
  m.set_int("dec_depth", cfg.model.dec_depth);
  m.set_int("heads_enc", cfg.model.heads_enc);
  m.set_int("heads_dec", cfg.model.heads_dec);
  m.set("kernel", kernel_name(cfg.model.kernel));
  m.set_int("chunk_size", cfg.model.chunk_size);
  m.set_int("adaptive_threshold", cfg.model.adaptive_threshold);
  m.set_bool("reparam", cfg.model.reparam_enabled);
  m.set_double("beta", cfg.beta);
  m.set("kl_form", kl_form_name(cfg.kl_form));
  m.set_double("mask_ratio", cfg.mask_ratio);
  m.set_int("frame_gap", cfg.frame_gap);
  m.set_double("lr", cfg.optim.lr);
  m.set_double("adam_beta1", cfg.optim.beta1);
  m.set_double("adam_beta2", cfg.optim.beta2);
  m.set_double("adam_eps", cfg.optim.eps);
  m.set_int("batch_size", cfg.batch_size);
  m.set_int("steps", cfg.steps);
  m.set_int("seed", static_cast<int64_t>(cfg.seed));
  m.set_int("workers", cfg.workers);
  m.set_int("checkpoint_every", cfg.checkpoint_every);
  m.set("data_dir", cfg.data_dir);
  m.set("out_dir", cfg.out_dir);
  return m;
}

TrainConfig train_config_from_map(const ConfigMap& m) {
  m.require_known({"frame_height", "frame_width", "channels", "patch_size", "width",
                   "latent_width", "depth", "dec_depth", "heads_enc", "heads_dec", "kernel",
                   "chunk_size", "adaptive_threshold", "reparam", "beta", "kl_form",
                   "mask_ratio", "frame_gap", "lr", "adam_beta1", "adam_beta2", "adam_eps",
                   "batch_size", "steps", "seed", "workers", "checkpoint_every", "data_dir",
                   "out_dir"});
  TrainConfig cfg;
  auto geti = [&](const char* k, int fallback) {
    return m.has(k) ? static_cast<int>(m.get_int(k)) : fallback;
  };
  auto getd = [&](const char* k, double fallback) {
    return m.has(k) ? m.get_double(k) : fallback;
  };
  cfg.model.grid = PatchGrid(geti("frame_height", 64), geti("frame_width", 64),
                             geti("channels", 3), geti("patch_size", 8));
  cfg.model.width = geti("width", 96);
  cfg.model.latent_width = geti("latent_width", 48);
  cfg.model.depth = geti("depth", 4);
  cfg.model.dec_depth = geti("dec_depth", 2);
  cfg.model.heads_enc = geti("heads_enc", 4);
  cfg.model.heads_dec = geti("heads_dec", 4);
  if (m.has("kernel")) cfg.model.kernel = kernel_from_name(m.get("kernel"));
  cfg.model.chunk_size = geti("chunk_size", 64);
  cfg.model.adaptive_threshold = geti("adaptive_threshold", 128);
  if (m.has("reparam")) cfg.model.reparam_enabled = m.get_bool("reparam");
  cfg.beta = getd("beta", 0.2);
  if (m.has("kl_form")) cfg.kl_form = kl_form_from_name(m.get("kl_form"));
  cfg.mask_ratio = getd("mask_ratio", 0.75);
  cfg.frame_gap = geti("frame_gap", 8);
  cfg.optim.lr = getd("lr", 3e-4);
  cfg.optim.beta1 = getd("adam_beta1", 0.9);
  cfg.optim.beta2 = getd("adam_beta2", 0.999);
  cfg.optim.eps = getd("adam_eps", 1e-8);
  cfg.batch_size = geti("batch_size", 16);
  cfg.steps = geti("steps", 2000);
  cfg.seed = m.has("seed") ? static_cast<uint64_t>(m.get_int("seed")) : 1;
  cfg.workers = geti("workers", 0);
  cfg.checkpoint_every = geti("checkpoint_every", 500);
  cfg.data_dir = m.get_or("data_dir", "");
  cfg.out_dir = m.get_or("out_dir", "");
  cfg.validate();
  return cfg;
}

// --------------------------------------------------------------- trainer --

namespace {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(4u, std::max(1u, hw)));
}

struct ItemTask {
  const FramePair* pair = nullptr;
  MaskSet mask;
  Tensor noise;
};

struct ItemResult {
  std::vector<std::vector<double>> grads;
  LossReport loss;
};

// forward/backward for one batch item on its own tape
ItemResult run_item(const ItemTask& task, const ParamStore& params, const TrainConfig& cfg) {
  Tape tape;
  ModelView view = bind_params(tape, params, cfg.model);
  Tensor a1 = image_to_tensor(task.pair->a1, 1.0 / kPixelScale);
  Tensor a2 = image_to_tensor(task.pair->a2, 1.0 / kPixelScale);
  ForwardOut out = model_forward(a1, a2, task.mask, view, cfg.model, task.noise);
  Tensor target = patchify(a2, cfg.model.grid, all_patches(cfg.model.grid.patch_count()));
  TotalLoss loss = total_loss(out.patches, target, task.mask, cfg.model.grid, out.mean,
                              out.stddev, cfg.beta, cfg.kl_form);
  tape.backward(loss.total);

  ItemResult result;
  result.loss = loss.report();
  result.grads.reserve(view.leaves.size());
  for (const Tensor& leaf : view.leaves) result.grads.push_back(tape.grad(leaf));
  return result;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, std::vector<FramePair> pairs)
    : cfg_(cfg), pairs_(std::move(pairs)), rng_(cfg.seed) {
  cfg_.validate();
  if (pairs_.empty()) throw ValueError("trainer: no training pairs");
  for (const FramePair& p : pairs_)
    if (p.a2.height != cfg_.model.grid.height || p.a2.width != cfg_.model.grid.width ||
        p.a2.channels != cfg_.model.grid.channels)
      throw ShapeError("trainer: pair '" + p.id + "' does not match the model grid");
  params_ = init_params(cfg_.model, rng_);
  adam_init(opt_, params_);
}

Trainer Trainer::resume(const Checkpoint& ckpt, std::vector<FramePair> pairs) {
  Trainer t;
  t.cfg_ = train_config_from_map(ConfigMap::parse(ckpt.config_text));
  t.pairs_ = std::move(pairs);
  if (t.pairs_.empty()) throw ValueError("trainer: no training pairs");
  t.params_ = ckpt.params;
  if (ckpt.has_opt) {
    t.opt_ = ckpt.opt;
  } else {
    adam_init(t.opt_, t.params_);
  }
  t.rng_.restore(ckpt.rng);
  t.step_ = ckpt.step;
  return t;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.config_text = train_config_to_map(cfg_).to_text();
  ckpt.step = step_;
  ckpt.rng = rng_.state();
  ckpt.params = params_;
  ckpt.has_opt = true;
  ckpt.opt = opt_;
  return ckpt;
}

LossReport Trainer::run_step() {
  const int batch = cfg_.batch_size;
  const int n_patches = cfg_.model.grid.patch_count();
  const Shape noise_shape = {n_patches + 1, cfg_.model.latent_width};

  // all randomness is drawn up front in a fixed order, so the result is
  // independent of worker scheduling
  std::vector<ItemTask> tasks(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    size_t pick = static_cast<size_t>(rng_.below(pairs_.size()));
    tasks[static_cast<size_t>(b)].pair = &pairs_[pick];
    tasks[static_cast<size_t>(b)].mask = sample_mask(cfg_.mask_ratio, n_patches, rng_);
    tasks[static_cast<size_t>(b)].noise =
        cfg_.model.reparam_enabled ? gaussian_noise(noise_shape, rng_) : Tensor();
  }

  std::vector<ItemResult> results(static_cast<size_t>(batch));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(batch));
  int workers = std::min(resolve_workers(cfg_.workers), batch);
  if (workers <= 1) {
    for (int b = 0; b < batch; ++b) {
      try {
        results[static_cast<size_t>(b)] = run_item(tasks[static_cast<size_t>(b)], params_, cfg_);
      } catch (...) {
        errors[static_cast<size_t>(b)] = std::current_exception();
      }
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int b = w; b < batch; b += workers) {
          try {
            results[static_cast<size_t>(b)] =
                run_item(tasks[static_cast<size_t>(b)], params_, cfg_);
          } catch (...) {
            errors[static_cast<size_t>(b)] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (int b = 0; b < batch; ++b) {
    if (errors[static_cast<size_t>(b)]) {
      try {
        std::rethrow_exception(errors[static_cast<size_t>(b)]);
      } catch (const Error& e) {
        throw NumericError("step " + std::to_string(step_ + 1) + ", item " + std::to_string(b) +
                           ": " + e.what());
      }
    }
  }

  // mean gradient, summed in item order
  std::vector<std::vector<double>> grads(static_cast<size_t>(params_.count()));
  for (int p = 0; p < params_.count(); ++p) {
    auto& g = grads[static_cast<size_t>(p)];
    g.assign(params_.record(p).values.size(), 0.0);
    for (int b = 0; b < batch; ++b) {
      const auto& gb = results[static_cast<size_t>(b)].grads[static_cast<size_t>(p)];
      for (size_t j = 0; j < g.size(); ++j) g[j] += gb[j];
    }
    double inv = 1.0 / batch;
    for (auto& x : g) x *= inv;
  }
  adam_step(params_, grads, opt_, cfg_.optim);
  step_ += 1;

  LossReport mean_loss;
  for (int b = 0; b < batch; ++b) {
    mean_loss.total += results[static_cast<size_t>(b)].loss.total;
    mean_loss.recon += results[static_cast<size_t>(b)].loss.recon;
    mean_loss.kl += results[static_cast<size_t>(b)].loss.kl;
  }
  mean_loss.total /= batch;
  mean_loss.recon /= batch;
  mean_loss.kl /= batch;
  mean_loss.beta = cfg_.beta;
  if (!std::isfinite(mean_loss.total))
    throw NumericError("step " + std::to_string(step_) + ": non-finite loss");
  return mean_loss;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.data_dir.empty() || cfg.out_dir.empty())
    throw ValueError("train: data_dir and out_dir are required");
  fs::create_directories(cfg.out_dir);
  train_config_to_map(cfg).save((fs::path(cfg.out_dir) / "config.txt").string());

  std::vector<FramePair> pairs = load_pair_dataset((fs::path(cfg.data_dir) / "train").string());
  Trainer trainer(cfg, std::move(pairs));

  TrainResult result;
  result.curve.reserve(static_cast<size_t>(cfg.steps));
  for (int s = 0; s < cfg.steps; ++s) {
    LossReport loss = trainer.run_step();
    result.curve.push_back({trainer.step(), loss});
    if (trainer.step() % static_cast<uint64_t>(cfg.checkpoint_every) == 0 &&
        s + 1 < cfg.steps) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06llu.bin",
                    static_cast<unsigned long long>(trainer.step()));
      save_checkpoint((fs::path(cfg.out_dir) / name).string(), trainer.snapshot());
    }
  }

  result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint_final.bin").string();
  save_checkpoint(result.checkpoint_path, trainer.snapshot());
  result.loss_csv_path = (fs::path(cfg.out_dir) / "loss.csv").string();
  write_loss_csv(result.loss_csv_path, result.curve);

  // final evaluation summary on the held-out split, when present
  fs::path eval_dir = fs::path(cfg.data_dir) / "eval";
  if (fs::exists(eval_dir / "manifest.tsv")) {
    std::vector<FramePair> eval_pairs = load_pair_dataset(eval_dir.string());
    EvalOptions opt;
    opt.mask_ratio = cfg.mask_ratio;
    opt.seed = cfg.seed;
    opt.workers = cfg.workers;
    EvalSummary summary = evaluate_model(trainer.params(), cfg.model, eval_pairs, opt);
    write_summary_csv((fs::path(cfg.out_dir) / "eval_summary.csv").string(), summary);
    write_eval_csv((fs::path(cfg.out_dir) / "eval_per_image.csv").string(), summary.model_rows);
  }
  return result;
}

// ------------------------------------------------------------ generation --

void GenConfig::validate() const {
  if (scenes < 1 || frames < 2) throw ValueError("gen: scenes and frames must be positive");
  if (gap < 1 || gap >= frames) throw ValueError("gen: gap must lie in [1, frames)");
  if (train_pairs < 1 || eval_pairs < 1) throw ValueError("gen: pair counts must be positive");
  if (height < 8 || width < 8) throw ValueError("gen: frames too small");
  if (objects < 0 || vel_min < 0 || vel_max < vel_min) throw ValueError("gen: bad velocity range");
}

ConfigMap gen_config_to_map(const GenConfig& cfg) {
  ConfigMap m;
  m.set_int("seed", static_cast<int64_t>(cfg.seed));
  m.set_int("scenes", cfg.scenes);
  m.set_int("frames", cfg.frames);
  m.set_int("height", cfg.height);
  m.set_int("width", cfg.width);
  m.set_int("objects", cfg.objects);
  m.set_double("vel_min", cfg.vel_min);
  m.set_double("vel_max", cfg.vel_max);
  m.set("background", background_name(cfg.background));
  m.set_int("train_pairs", cfg.train_pairs);
  m.set_int("eval_pairs", cfg.eval_pairs);
  m.set_int("gap", cfg.gap);
  return m;
}

GenConfig gen_config_from_map(const ConfigMap& m) {
  m.require_known({"seed", "scenes", "frames", "height", "width", "objects", "vel_min",
                   "vel_max", "background", "train_pairs", "eval_pairs", "gap"});
  GenConfig cfg;
  if (m.has("seed")) cfg.seed = static_cast<uint64_t>(m.get_int("seed"));
  if (m.has("scenes")) cfg.scenes = static_cast<int>(m.get_int("scenes"));
  if (m.has("frames")) cfg.frames = static_cast<int>(m.get_int("frames"));
  if (m.has("height")) cfg.height = static_cast<int>(m.get_int("height"));
  if (m.has("width")) cfg.width = static_cast<int>(m.get_int("width"));
  if (m.has("objects")) cfg.objects = static_cast<int>(m.get_int("objects"));
  if (m.has("vel_min")) cfg.vel_min = m.get_double("vel_min");
  if (m.has("vel_max")) cfg.vel_max = m.get_double("vel_max");
  if (m.has("background")) cfg.background = background_from_name(m.get("background"));
  if (m.has("train_pairs")) cfg.train_pairs = static_cast<int>(m.get_int("train_pairs"));
  if (m.has("eval_pairs")) cfg.eval_pairs = static_cast<int>(m.get_int("eval_pairs"));
  if (m.has("gap")) cfg.gap = static_cast<int>(m.get_int("gap"));
  cfg.validate();
  return cfg;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  Rng r(seed ^ (tag * 0x9E3779B97F4A7C15ull));
  return r.next_u64();
}

SceneSpec scene_spec_for(const GenConfig& cfg, int scene_index) {
  SceneSpec spec;
  spec.seed = mix_seed(cfg.seed, 1000 + static_cast<uint64_t>(scene_index));
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.objects = cfg.objects;
  spec.vel_min = cfg.vel_min;
  spec.vel_max = cfg.vel_max;
  spec.background = cfg.background;
  return spec;
}

struct PairPick {
  int scene = 0;
  int t = 0;
  std::string id;
};

// Temporal split: training pairs start in the first 75% of admissible
// offsets, eval pairs in the held-out tail.
std::vector<PairPick> pick_pairs(const GenConfig& cfg, int gap, bool eval_split, int count,
                                 uint64_t stream_tag) {
  int admissible = cfg.frames - gap;
  int split = std::clamp((admissible * 3) / 4, 1, admissible - 1);
  int lo = eval_split ? split : 0;
  int hi = eval_split ? admissible : split;
  Rng rng(mix_seed(cfg.seed, stream_tag + static_cast<uint64_t>(gap)));
  std::vector<PairPick> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    PairPick pick;
    pick.scene = i % cfg.scenes;
    pick.t = lo + static_cast<int>(rng.below(static_cast<uint64_t>(hi - lo)));
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s_s%02d_%04d", eval_split ? "eval" : "train", pick.scene, i);
    pick.id = buf;
    out.push_back(std::move(pick));
  }
  return out;
}

std::vector<FramePair> realize_pairs(const std::vector<PairPick>& picks, int gap,
                                     const std::vector<std::vector<Image>>& scenes) {
  std::vector<FramePair> out;
  out.reserve(picks.size());
  for (const PairPick& pick : picks) {
    FramePair p;
    p.id = pick.id;
    p.gap = gap;
    p.a1 = scenes[static_cast<size_t>(pick.scene)][static_cast<size_t>(pick.t)];
    p.a2 = scenes[static_cast<size_t>(pick.scene)][static_cast<size_t>(pick.t + gap)];
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<Image>> materialize_scenes(const GenConfig& cfg) {
  std::vector<std::vector<Image>> scenes;
  scenes.reserve(static_cast<size_t>(cfg.scenes));
  for (int s = 0; s < cfg.scenes; ++s)
    scenes.push_back(generate_scene(scene_spec_for(cfg, s), cfg.frames));
  return scenes;
}

}  // namespace

std::vector<FramePair> regenerate_eval_pairs(const GenConfig& cfg, int gap) {
  if (gap < 1 || gap >= cfg.frames)
    throw ValueError("regenerate_eval_pairs: gap " + std::to_string(gap) + " out of range");
  std::vector<std::vector<Image>> scenes = materialize_scenes(cfg);
  return realize_pairs(pick_pairs(cfg, gap, true, cfg.eval_pairs, 7), gap, scenes);
}

void generate_dataset(const GenConfig& cfg, const std::string& dir) {
  cfg.validate();
  fs::create_directories(dir);
  gen_config_to_map(cfg).save((fs::path(dir) / "gen.txt").string());

  std::vector<std::vector<Image>> scenes = materialize_scenes(cfg);
  std::vector<FramePair> train_pairs =
      realize_pairs(pick_pairs(cfg, cfg.gap, false, cfg.train_pairs, 3), cfg.gap, scenes);
  std::vector<FramePair> eval_pairs =
      realize_pairs(pick_pairs(cfg, cfg.gap, true, cfg.eval_pairs, 7), cfg.gap, scenes);

  write_pair_dataset((fs::path(dir) / "train").string(), train_pairs);
  write_pair_dataset((fs::path(dir) / "eval").string(), eval_pairs);
}

// ------------------------------------------------------------------- csv --

void write_loss_csv(const std::string& path, const std::vector<StepRecord>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("csv: cannot write " + path);
  out << "step,total,recon,kl,beta\n";
  out.precision(17);
  for (const StepRecord& r : curve)
    out << r.step << ',' << r.loss.total << ',' << r.loss.recon << ',' << r.loss.kl << ','
        << r.loss.beta << '\n';
}

}  // namespace siammcvae
