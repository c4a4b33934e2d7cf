// Command-line front end: gen-data, train, restore, evaluate, sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "siammcvae/train.hpp"

namespace fs = std::filesystem;
using namespace siammcvae;

namespace {

struct TrainFlags {
  std::string config_path, data_dir, out_dir;
  int steps = -1, batch_size = -1, workers = -1, checkpoint_every = -1;
  int width = -1, latent_width = -1, depth = -1, dec_depth = -1;
  int heads_enc = -1, heads_dec = -1, patch_size = -1;
  int frame_height = -1, frame_width = -1, channels = -1;
  int chunk_size = -1, adaptive_threshold = -1, frame_gap = -1;
  double lr = -1, beta = -1, mask_ratio = -1;
  long long seed = -1;
  std::string kernel, kl_form;
  int reparam = -1;  // tri-state
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_path, "config file (key = value lines)");
  cmd->add_option("--steps", f.steps, "optimizer steps");
  cmd->add_option("--batch-size", f.batch_size, "pairs per step");
  cmd->add_option("--workers", f.workers, "parallel batch workers (0 = auto)");
  cmd->add_option("--checkpoint-every", f.checkpoint_every, "steps between checkpoints");
  cmd->add_option("--lr", f.lr, "step size");
  cmd->add_option("--beta", f.beta, "KL weight");
  cmd->add_option("--kl-form", f.kl_form, "paper | standard");
  cmd->add_option("--mask-ratio", f.mask_ratio, "training masking ratio");
  cmd->add_option("--frame-gap", f.frame_gap, "frame gap (metadata for reports)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--width", f.width, "encoder width");
  cmd->add_option("--latent-width", f.latent_width, "latent width");
  cmd->add_option("--depth", f.depth, "encoder blocks");
  cmd->add_option("--dec-depth", f.dec_depth, "decoder blocks");
  cmd->add_option("--heads-enc", f.heads_enc, "encoder heads");
  cmd->add_option("--heads-dec", f.heads_dec, "decoder heads");
  cmd->add_option("--patch-size", f.patch_size, "patch side in pixels");
  cmd->add_option("--frame-height", f.frame_height, "frame height");
  cmd->add_option("--frame-width", f.frame_width, "frame width");
  cmd->add_option("--channels", f.channels, "frame channels");
  cmd->add_option("--kernel", f.kernel, "standard | chunked | adaptive");
  cmd->add_option("--chunk-size", f.chunk_size, "attention chunk rows");
  cmd->add_option("--adaptive-threshold", f.adaptive_threshold,
                  "adaptive kernel switch-over length");
  cmd->add_flag("--reparam,!--no-reparam", f.reparam, "reparameterization layer on/off");
}

TrainConfig resolve_train_config(const TrainFlags& f) {
  TrainConfig cfg;
  if (!f.config_path.empty())
    cfg = train_config_from_map(ConfigMap::load(f.config_path));
  int h = f.frame_height > 0 ? f.frame_height : cfg.model.grid.height;
  int w = f.frame_width > 0 ? f.frame_width : cfg.model.grid.width;
  int c = f.channels > 0 ? f.channels : cfg.model.grid.channels;
  int p = f.patch_size > 0 ? f.patch_size : cfg.model.grid.patch;
  cfg.model.grid = PatchGrid(h, w, c, p);
  if (f.width > 0) cfg.model.width = f.width;
  if (f.latent_width > 0) cfg.model.latent_width = f.latent_width;
  if (f.depth > 0) cfg.model.depth = f.depth;
  if (f.dec_depth > 0) cfg.model.dec_depth = f.dec_depth;
  if (f.heads_enc > 0) cfg.model.heads_enc = f.heads_enc;
  if (f.heads_dec > 0) cfg.model.heads_dec = f.heads_dec;
  if (!f.kernel.empty()) cfg.model.kernel = kernel_from_name(f.kernel);
  if (f.chunk_size > 0) cfg.model.chunk_size = f.chunk_size;
  if (f.adaptive_threshold > 0) cfg.model.adaptive_threshold = f.adaptive_threshold;
  if (f.reparam >= 0) cfg.model.reparam_enabled = f.reparam != 0;
  if (f.lr > 0) cfg.optim.lr = f.lr;
  if (f.beta >= 0) cfg.beta = f.beta;
  if (!f.kl_form.empty()) cfg.kl_form = kl_form_from_name(f.kl_form);
  if (f.mask_ratio > 0) cfg.mask_ratio = f.mask_ratio;
  if (f.frame_gap > 0) cfg.frame_gap = f.frame_gap;
  if (f.steps > 0) cfg.steps = f.steps;
  if (f.batch_size > 0) cfg.batch_size = f.batch_size;
  if (f.workers >= 0) cfg.workers = f.workers;
  if (f.checkpoint_every > 0) cfg.checkpoint_every = f.checkpoint_every;
  if (f.seed >= 0) cfg.seed = static_cast<uint64_t>(f.seed);
  if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  cfg.validate();
  return cfg;
}

std::vector<int> parse_patch_list(const std::string& csv) {
  std::vector<int> out;
  std::istringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw ValueError("--mask-patches: empty list");
  std::sort(out.begin(), out.end());
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"siamese masked conditional VAE for video frame restoration"};
  app.require_subcommand(1);

  // ------------------------------------------------------------ gen-data --
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic pair dataset");
  GenConfig gen;
  std::string gen_out;
  std::string gen_background = "gradient";
  long long gen_seed = 1;
  gen_cmd->add_option("--out", gen_out, "output dataset directory")->required();
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--scenes", gen.scenes, "number of scenes");
  gen_cmd->add_option("--frames", gen.frames, "frames per scene");
  gen_cmd->add_option("--height", gen.height, "frame height");
  gen_cmd->add_option("--width", gen.width, "frame width");
  gen_cmd->add_option("--objects", gen.objects, "moving objects per scene");
  gen_cmd->add_option("--background", gen_background, "gradient | noise");
  gen_cmd->add_option("--vel-min", gen.vel_min, "min speed, pixels/frame");
  gen_cmd->add_option("--vel-max", gen.vel_max, "max speed, pixels/frame");
  gen_cmd->add_option("--train-pairs", gen.train_pairs, "training pairs");
  gen_cmd->add_option("--eval-pairs", gen.eval_pairs, "held-out pairs");
  gen_cmd->add_option("--gap", gen.gap, "frame gap");

  // --------------------------------------------------------------- train --
  auto* train_cmd = app.add_subcommand("train", "train a model");
  TrainFlags tf;
  train_cmd->add_option("--data", tf.data_dir, "dataset directory (from gen-data)")->required();
  train_cmd->add_option("--out", tf.out_dir, "output directory")->required();
  add_train_flags(train_cmd, tf);

  // ------------------------------------------------------------- restore --
  auto* restore_cmd = app.add_subcommand("restore", "restore one masked pair into a panel");
  std::string r_ckpt, r_out, r_pair_a, r_pair_b, r_data, r_patches;
  double r_ratio = 0.90;
  long long r_seed = 1;
  int r_index = 0;
  restore_cmd->add_option("--checkpoint", r_ckpt, "trained checkpoint")->required();
  restore_cmd->add_option("--out", r_out, "panel PPM path")->required();
  restore_cmd->add_option("--pair-a", r_pair_a, "conditioning frame (PPM)");
  restore_cmd->add_option("--pair-b", r_pair_b, "frame to restore (PPM)");
  restore_cmd->add_option("--data", r_data, "dataset directory (eval split)");
  restore_cmd->add_option("--index", r_index, "pair index within --data");
  restore_cmd->add_option("--mask-ratio", r_ratio, "masking ratio");
  restore_cmd->add_option("--mask-patches", r_patches, "explicit masked patch indices (csv)");
  restore_cmd->add_option("--seed", r_seed, "mask seed");

  // ------------------------------------------------------------ evaluate --
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint against the baselines");
  std::string e_ckpt, e_data, e_out;
  double e_ratio = 0.75;
  long long e_seed = 1;
  bool e_masked_only = false;
  int e_workers = 0;
  eval_cmd->add_option("--checkpoint", e_ckpt, "trained checkpoint")->required();
  eval_cmd->add_option("--data", e_data, "dataset directory")->required();
  eval_cmd->add_option("--out", e_out, "output directory")->required();
  eval_cmd->add_option("--mask-ratio", e_ratio, "masking ratio");
  eval_cmd->add_option("--seed", e_seed, "mask seed");
  eval_cmd->add_flag("--masked-only", e_masked_only, "score pixel metrics on masked regions only");
  eval_cmd->add_option("--workers", e_workers, "parallel workers (0 = auto)");

  // --------------------------------------------------------------- sweep --
  auto* sweep_cmd = app.add_subcommand("sweep", "run an ablation/robustness sweep");
  TrainFlags sf;
  std::string s_kind, s_ckpt;
  sweep_cmd->add_option("--kind", s_kind, "mask_ratio | frame_gap | beta | reparam | kernel")
      ->required();
  sweep_cmd->add_option("--data", sf.data_dir, "dataset directory")->required();
  sweep_cmd->add_option("--out", sf.out_dir, "output directory")->required();
  sweep_cmd->add_option("--checkpoint", s_ckpt,
                        "trained checkpoint (mask_ratio/frame_gap/kernel sweeps)");
  add_train_flags(sweep_cmd, sf);

  CLI11_PARSE(app, argc, argv);

  if (gen_cmd->parsed()) {
    gen.seed = static_cast<uint64_t>(gen_seed);
    gen.background = background_from_name(gen_background);
    generate_dataset(gen, gen_out);
    std::printf("wrote dataset to %s (%d train, %d eval pairs)\n", gen_out.c_str(),
                gen.train_pairs, gen.eval_pairs);
    return 0;
  }

  if (train_cmd->parsed()) {
    TrainConfig cfg = resolve_train_config(tf);
    TrainResult result = train(cfg);
    std::printf("trained %d steps; final loss %.6f\n", cfg.steps,
                result.curve.back().loss.total);
    std::printf("checkpoint: %s\nloss curve: %s\n", result.checkpoint_path.c_str(),
                result.loss_csv_path.c_str());
    return 0;
  }

  if (restore_cmd->parsed()) {
    Checkpoint ckpt = load_checkpoint(r_ckpt);
    TrainConfig cfg = train_config_from_map(ConfigMap::parse(ckpt.config_text));
    FramePair pair;
    if (!r_pair_a.empty() || !r_pair_b.empty()) {
      if (r_pair_a.empty() || r_pair_b.empty())
        throw ValueError("restore: both --pair-a and --pair-b are required");
      pair.a1 = read_ppm(r_pair_a);
      pair.a2 = read_ppm(r_pair_b);
      pair.id = "cli";
    } else if (!r_data.empty()) {
      auto pairs = load_pair_dataset((fs::path(r_data) / "eval").string());
      if (r_index < 0 || r_index >= static_cast<int>(pairs.size()))
        throw IndexError("restore: --index out of range");
      pair = pairs[static_cast<size_t>(r_index)];
    } else {
      throw ValueError("restore: provide --pair-a/--pair-b or --data");
    }
    if (pair.a2.height != cfg.model.grid.height || pair.a2.width != cfg.model.grid.width ||
        pair.a2.channels != cfg.model.grid.channels)
      throw ShapeError("restore: pair geometry does not match the checkpoint config");

    int n = cfg.model.grid.patch_count();
    MaskSet mask = r_patches.empty()
                       ? eval_mask_for(pair.id, static_cast<uint64_t>(r_seed), r_ratio, n)
                       : MaskSet(parse_patch_list(r_patches), n);
    Image restored = restore_image(ckpt.params, cfg.model, pair, mask);
    Image panel = make_panel(masked_visualization(pair.a2, mask, cfg.model.grid), restored,
                             pair.a2);
    write_ppm(r_out, panel);
    std::printf("wrote panel (masked | model | ground truth) to %s\n", r_out.c_str());
    return 0;
  }

  if (eval_cmd->parsed()) {
    Checkpoint ckpt = load_checkpoint(e_ckpt);
    TrainConfig cfg = train_config_from_map(ConfigMap::parse(ckpt.config_text));
    auto pairs = load_pair_dataset((fs::path(e_data) / "eval").string());
    EvalOptions opt;
    opt.mask_ratio = e_ratio;
    opt.seed = static_cast<uint64_t>(e_seed);
    opt.masked_only = e_masked_only;
    opt.workers = e_workers;
    EvalSummary summary = evaluate_model(ckpt.params, cfg.model, pairs, opt);

    fs::create_directories(e_out);
    ConfigMap resolved;
    resolved.set("checkpoint", e_ckpt);
    resolved.set("data_dir", e_data);
    resolved.set_double("mask_ratio", e_ratio);
    resolved.set_int("seed", e_seed);
    resolved.set_bool("masked_only", e_masked_only);
    resolved.save((fs::path(e_out) / "eval_config.txt").string());
    write_eval_csv((fs::path(e_out) / "per_image.csv").string(), summary.model_rows);
    write_summary_csv((fs::path(e_out) / "summary.csv").string(), summary);
    std::printf("method     mse      mae     psnr   ssim   fsim   masked_mse\n");
    auto line = [](const char* name, const EvalAggregate& a) {
      std::printf("%-9s %8.2f %7.3f %7.2f %6.3f %6.3f %10.2f\n", name, a.metrics.mse,
                  a.metrics.mae, a.metrics.psnr, a.metrics.ssim, a.metrics.fsim, a.masked_mse);
    };
    line("model", summary.model);
    line("mean_fill", summary.mean_fill);
    line("copy_a1", summary.copy_a1);
    return 0;
  }

  if (sweep_cmd->parsed()) {
    SweepKind kind = sweep_kind_from_name(s_kind);
    TrainConfig base = resolve_train_config(sf);
    Checkpoint ckpt;
    bool have_ckpt = !s_ckpt.empty();
    if (have_ckpt) ckpt = load_checkpoint(s_ckpt);
    fs::create_directories(base.out_dir);

    ConfigMap resolved = train_config_to_map(base);
    resolved.set("sweep_kind", s_kind);
    resolved.set("checkpoint", s_ckpt);
    resolved.save((fs::path(base.out_dir) / "sweep_config.txt").string());

    std::vector<SweepRow> rows =
        run_sweep(kind, base, have_ckpt ? &ckpt : nullptr, base.data_dir);
    std::string csv = (fs::path(base.out_dir) / (s_kind + "_sweep.csv")).string();
    write_sweep_csv(csv, s_kind, rows);
    std::printf("%-10s %8s %8s %7s %6s %6s\n", s_kind.c_str(), "mse", "mae", "psnr", "ssim",
                "fsim");
    for (const SweepRow& r : rows)
      std::printf("%-10s %8.2f %8.3f %7.2f %6.3f %6.3f\n", r.setting.c_str(),
                  r.scores.metrics.mse, r.scores.metrics.mae, r.scores.metrics.psnr,
                  r.scores.metrics.ssim, r.scores.metrics.fsim);
    std::printf("wrote %s\n", csv.c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ParseError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}
