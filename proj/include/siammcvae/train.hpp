#pragma once

#include <string>
#include <vector>

#include "siammcvae/config.hpp"
#include "siammcvae/data.hpp"
#include "siammcvae/loss.hpp"
#include "siammcvae/metrics.hpp"
#include "siammcvae/model.hpp"

namespace siammcvae {

// ------------------------------------------------------------ optimizer ----

struct OptimConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  uint64_t t = 0;
  std::vector<std::vector<double>> m, v;  // per param, in store order
};

void adam_init(AdamState& state, const ParamStore& params);
void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const OptimConfig& cfg);

// ---------------------------------------------------------------- config ----

struct TrainConfig {
  ModelConfig model;
  double beta = 0.2;
  KlForm kl_form = KlForm::paper;
  double mask_ratio = 0.75;
  int frame_gap = 8;
  OptimConfig optim;
  int batch_size = 16;
  int steps = 2000;
  uint64_t seed = 1;
  int workers = 0;  // 0 = number of hardware threads, capped at 4
  int checkpoint_every = 500;
  std::string data_dir;
  std::string out_dir;

  void validate() const;
};

ConfigMap train_config_to_map(const TrainConfig& cfg);
TrainConfig train_config_from_map(const ConfigMap& map);

// ------------------------------------------------------------ checkpoint ----

struct Checkpoint {
  uint32_t version = 1;
  std::string config_text;  // resolved TrainConfig
  uint64_t step = 0;
  Rng::State rng;
  ParamStore params;
  bool has_opt = false;
  AdamState opt;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// --------------------------------------------------------------- trainer ----

struct StepRecord {
  uint64_t step = 0;
  LossReport loss;
};

// Owns the training state; data-parallel over batch items (independent
// tapes), gradients summed in item order so results do not depend on the
// worker count.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<FramePair> pairs);
  static Trainer resume(const Checkpoint& ckpt, std::vector<FramePair> pairs);

  LossReport run_step();
  Checkpoint snapshot() const;

  uint64_t step() const { return step_; }
  const ParamStore& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  Trainer() = default;
  TrainConfig cfg_;
  std::vector<FramePair> pairs_;
  ParamStore params_;
  AdamState opt_;
  Rng rng_{0};
  uint64_t step_ = 0;
};

struct TrainResult {
  std::vector<StepRecord> curve;
  std::string checkpoint_path;
  std::string loss_csv_path;
};

// Full run: loads the train split, writes the resolved config, the loss
// curve CSV, periodic checkpoints, and a final evaluation summary.
TrainResult train(const TrainConfig& cfg);

// ------------------------------------------------------------ generation ----

struct GenConfig {
  uint64_t seed = 1;
  int scenes = 8;
  int frames = 96;
  int height = 64;
  int width = 64;
  int objects = 8;
  double vel_min = 1.0;
  double vel_max = 3.0;
  SceneSpec::Background background = SceneSpec::Background::gradient;
  int train_pairs = 512;
  int eval_pairs = 64;
  int gap = 8;

  void validate() const;
};

ConfigMap gen_config_to_map(const GenConfig& cfg);
GenConfig gen_config_from_map(const ConfigMap& map);

// Writes <dir>/train, <dir>/eval pair datasets plus the resolved gen
// config; eval pairs come from a temporally held-out tail of each scene.
void generate_dataset(const GenConfig& cfg, const std::string& dir);

// Regenerates the eval split at a different frame gap (same scenes/seed).
std::vector<FramePair> regenerate_eval_pairs(const GenConfig& cfg, int gap);

// ------------------------------------------------------------ evaluation ----

struct EvalOptions {
  double mask_ratio = 0.75;
  uint64_t seed = 1;
  bool masked_only = false;  // score pixel metrics on masked regions only
  int workers = 0;
};

struct EvalRow {
  std::string id;
  MetricReport metrics;  // per the scoring mode (full-frame by default)
  double masked_mse = 0, masked_mae = 0, masked_psnr = 0;
};

struct EvalAggregate {
  MetricReport metrics;
  double masked_mse = 0, masked_mae = 0, masked_psnr = 0;
};

struct EvalSummary {
  std::vector<EvalRow> model_rows;
  EvalAggregate model;
  EvalAggregate mean_fill;
  EvalAggregate copy_a1;
};

// Per-image masks are fixed by (seed, image id). The model runs in
// deterministic-inference mode (zero noise). Baselines: mean-fill (masked
// patches <- dataset mean color) and copy-from-A1 (co-located patches).
EvalSummary evaluate_model(const ParamStore& params, const ModelConfig& cfg,
                           const std::vector<FramePair>& pairs, const EvalOptions& opt);

// Restores one pair with an explicit mask; returns the restored frame.
Image restore_image(const ParamStore& params, const ModelConfig& cfg, const FramePair& pair,
                    const MaskSet& mask);

// A2 with masked patches grayed out (the "masked input" panel column).
Image masked_visualization(const Image& a2, const MaskSet& mask, const PatchGrid& grid);

// Horizontal panel: masked input | restoration | ground truth.
Image make_panel(const Image& masked, const Image& restored, const Image& truth);

// Per-pixel boolean mask of the masked patches.
std::vector<bool> pixel_mask(const MaskSet& mask, const PatchGrid& grid);

MaskSet eval_mask_for(const std::string& id, uint64_t seed, double ratio, int patches);

// ----------------------------------------------------------------- sweeps ----

enum class SweepKind { mask_ratio, frame_gap, beta, reparam, kernel };
SweepKind sweep_kind_from_name(const std::string& name);
const char* sweep_kind_name(SweepKind k);

struct SweepRow {
  std::string setting;
  EvalAggregate scores;
};

// mask_ratio/kernel/frame_gap evaluate an existing checkpoint; beta and
// reparam train one model per setting with identical seeds.
std::vector<SweepRow> run_sweep(SweepKind kind, const TrainConfig& base,
                                const Checkpoint* ckpt, const std::string& data_dir);

// ------------------------------------------------------------------- csv ----

void write_loss_csv(const std::string& path, const std::vector<StepRecord>& curve);
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);
void write_summary_csv(const std::string& path, const EvalSummary& summary);
void write_sweep_csv(const std::string& path, const std::string& setting_name,
                     const std::vector<SweepRow>& rows);

}  // namespace siammcvae
