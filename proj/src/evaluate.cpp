#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "siammcvae/train.hpp"

namespace fs = std::filesystem;

namespace siammcvae {

std::vector<bool> pixel_mask(const MaskSet& mask, const PatchGrid& grid) {
  std::vector<bool> out(static_cast<size_t>(grid.height) * grid.width * grid.channels, false);
  int gc = grid.grid_cols(), p = grid.patch, c = grid.channels, w = grid.width;
  for (int q : mask.masked) {
    int gy = q / gc, gx = q % gc;
    for (int py = 0; py < p; ++py)
      for (int px = 0; px < p; ++px)
        for (int ch = 0; ch < c; ++ch)
          out[(static_cast<size_t>(gy * p + py) * w + (gx * p + px)) * c + ch] = true;
  }
  return out;
}

MaskSet eval_mask_for(const std::string& id, uint64_t seed, double ratio, int patches) {
  Rng rng(seed ^ fnv1a(id));
  return sample_mask(ratio, patches, rng);
}

Image restore_image(const ParamStore& params, const ModelConfig& cfg, const FramePair& pair,
                    const MaskSet& mask) {
  ModelView view = bind_constants(params, cfg);
  Tensor a1 = image_to_tensor(pair.a1, 1.0 / kPixelScale);
  Tensor a2 = image_to_tensor(pair.a2, 1.0 / kPixelScale);
  ForwardOut out = model_forward(a1, a2, mask, view, cfg, Tensor());  // zero noise
  Tensor full = unpatchify(out.patches, cfg.grid);
  return tensor_to_image(full, kPixelScale);
}

Image masked_visualization(const Image& a2, const MaskSet& mask, const PatchGrid& grid) {
  Image out = a2;
  std::vector<bool> px = pixel_mask(mask, grid);
  for (size_t i = 0; i < out.px.size(); ++i)
    if (px[i]) out.px[i] = 128.0;
  return out;
}

Image make_panel(const Image& masked, const Image& restored, const Image& truth) {
  if (!masked.same_shape(restored) || !masked.same_shape(truth))
    throw ShapeError("make_panel: column shapes differ");
  const int sep = 2;
  Image panel(masked.height, masked.width * 3 + sep * 2, masked.channels, 255.0);
  auto blit = [&](const Image& img, int x0) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < img.channels; ++c) panel.at(y, x0 + x, c) = img.at(y, x, c);
  };
  blit(masked, 0);
  blit(restored, masked.width + sep);
  blit(truth, 2 * (masked.width + sep));
  return panel;
}

namespace {

// fill masked patches of a copy of a2 from a source image
Image fill_masked_from(const Image& a2, const Image& source, const MaskSet& mask,
                       const PatchGrid& grid) {
  Image out = a2;
  std::vector<bool> px = pixel_mask(mask, grid);
  for (size_t i = 0; i < out.px.size(); ++i)
    if (px[i]) out.px[i] = source.px[i];
  return out;
}

struct ScoreAccumulator {
  std::vector<MetricReport> reports;
  std::vector<double> masked_mses, masked_maes, masked_psnrs;

  void add(const Image& restored, const Image& truth, const std::vector<bool>& px_mask,
           bool masked_only) {
    double m_mse = masked_mse(restored, truth, px_mask);
    double m_mae = masked_mae(restored, truth, px_mask);
    MetricReport r;
    if (masked_only) {
      r.mse = m_mse;
      r.mae = m_mae;
      r.psnr = psnr_from_mse(m_mse);
      r.ssim = ssim(restored, truth);
      r.fsim = fsim(restored, truth);
    } else {
      r = compare_images(restored, truth);
    }
    reports.push_back(r);
    masked_mses.push_back(m_mse);
    masked_maes.push_back(m_mae);
    masked_psnrs.push_back(psnr_from_mse(m_mse));
  }

  EvalAggregate aggregate() const {
    EvalAggregate agg;
    agg.metrics = mean_report(reports);
    auto mean_of = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    agg.masked_mse = mean_of(masked_mses);
    agg.masked_mae = mean_of(masked_maes);
    agg.masked_psnr = mean_of(masked_psnrs);
    return agg;
  }
};

}  // namespace

EvalSummary evaluate_model(const ParamStore& params, const ModelConfig& cfg,
                           const std::vector<FramePair>& pairs, const EvalOptions& opt) {
  if (pairs.empty()) throw ValueError("evaluate: no pairs");
  const int n = cfg.grid.patch_count();

  // dataset mean color over the ground-truth frames (mean-fill baseline)
  double mean_color[3] = {0, 0, 0};
  {
    double count = 0;
    for (const FramePair& p : pairs) {
      for (int y = 0; y < p.a2.height; ++y)
        for (int x = 0; x < p.a2.width; ++x)
          for (int c = 0; c < p.a2.channels; ++c) mean_color[c] += p.a2.at(y, x, c);
      count += static_cast<double>(p.a2.height) * p.a2.width;
    }
    for (double& c : mean_color) c = std::round(c / count);
  }

  // deterministic per-image masks; restoration runs are independent
  std::vector<MaskSet> masks;
  masks.reserve(pairs.size());
  for (const FramePair& p : pairs) masks.push_back(eval_mask_for(p.id, opt.seed, opt.mask_ratio, n));

  std::vector<Image> restored(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  int workers = opt.workers > 0
                    ? opt.workers
                    : static_cast<int>(std::min(4u, std::max(1u, std::thread::hardware_concurrency())));
  workers = std::min<int>(workers, static_cast<int>(pairs.size()));
  if (workers <= 1) {
    for (size_t i = 0; i < pairs.size(); ++i)
      restored[i] = restore_image(params, cfg, pairs[i], masks[i]);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w]() {
        for (size_t i = static_cast<size_t>(w); i < pairs.size(); i += static_cast<size_t>(workers)) {
          try {
            restored[i] = restore_image(params, cfg, pairs[i], masks[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  EvalSummary summary;
  ScoreAccumulator model_acc, mean_fill_acc, copy_a1_acc;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const FramePair& p = pairs[i];
    std::vector<bool> px = pixel_mask(masks[i], cfg.grid);

    model_acc.add(restored[i], p.a2, px, opt.masked_only);
    EvalRow row;
    row.id = p.id;
    row.metrics = model_acc.reports.back();
    row.masked_mse = model_acc.masked_mses.back();
    row.masked_mae = model_acc.masked_maes.back();
    row.masked_psnr = model_acc.masked_psnrs.back();
    summary.model_rows.push_back(std::move(row));

    Image mean_img(p.a2.height, p.a2.width, p.a2.channels);
    for (int y = 0; y < p.a2.height; ++y)
      for (int x = 0; x < p.a2.width; ++x)
        for (int c = 0; c < p.a2.channels; ++c) mean_img.at(y, x, c) = mean_color[c];
    mean_fill_acc.add(fill_masked_from(p.a2, mean_img, masks[i], cfg.grid), p.a2, px,
                      opt.masked_only);
    copy_a1_acc.add(fill_masked_from(p.a2, p.a1, masks[i], cfg.grid), p.a2, px, opt.masked_only);
  }
  summary.model = model_acc.aggregate();
  summary.mean_fill = mean_fill_acc.aggregate();
  summary.copy_a1 = copy_a1_acc.aggregate();
  return summary;
}

// ----------------------------------------------------------------- sweeps --

SweepKind sweep_kind_from_name(const std::string& name) {
  if (name == "mask_ratio") return SweepKind::mask_ratio;
  if (name == "frame_gap") return SweepKind::frame_gap;
  if (name == "beta") return SweepKind::beta;
  if (name == "reparam") return SweepKind::reparam;
  if (name == "kernel") return SweepKind::kernel;
  throw ValueError("unknown sweep kind '" + name + "'");
}

const char* sweep_kind_name(SweepKind k) {
  switch (k) {
    case SweepKind::mask_ratio: return "mask_ratio";
    case SweepKind::frame_gap: return "frame_gap";
    case SweepKind::beta: return "beta";
    case SweepKind::reparam: return "reparam";
    case SweepKind::kernel: return "kernel";
  }
  return "?";
}

namespace {

std::vector<FramePair> load_eval_split(const std::string& data_dir) {
  return load_pair_dataset((fs::path(data_dir) / "eval").string());
}

EvalAggregate trained_setting_scores(TrainConfig cfg, const std::string& data_dir) {
  std::vector<FramePair> train_pairs = load_pair_dataset((fs::path(data_dir) / "train").string());
  Trainer trainer(cfg, std::move(train_pairs));
  for (int s = 0; s < cfg.steps; ++s) trainer.run_step();
  EvalOptions opt;
  opt.mask_ratio = cfg.mask_ratio;
  opt.seed = cfg.seed;
  opt.workers = cfg.workers;
  return evaluate_model(trainer.params(), cfg.model, load_eval_split(data_dir), opt).model;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::vector<SweepRow> run_sweep(SweepKind kind, const TrainConfig& base, const Checkpoint* ckpt,
                                const std::string& data_dir) {
  std::vector<SweepRow> rows;
  auto need_checkpoint = [&]() {
    if (!ckpt) throw ValueError("sweep: this kind needs a trained checkpoint");
  };

  switch (kind) {
    case SweepKind::mask_ratio: {
      need_checkpoint();
      TrainConfig cfg = train_config_from_map(ConfigMap::parse(ckpt->config_text));
      std::vector<FramePair> eval_pairs = load_eval_split(data_dir);
      for (double ratio : {0.45, 0.60, 0.75, 0.90}) {
        EvalOptions opt;
        opt.mask_ratio = ratio;
        opt.seed = base.seed;
        opt.workers = base.workers;
        rows.push_back(
            {format_double(ratio),
             evaluate_model(ckpt->params, cfg.model, eval_pairs, opt).model});
      }
      break;
    }
    case SweepKind::frame_gap: {
      need_checkpoint();
      TrainConfig cfg = train_config_from_map(ConfigMap::parse(ckpt->config_text));
      GenConfig gen = gen_config_from_map(ConfigMap::load((fs::path(data_dir) / "gen.txt").string()));
      for (int gap : {2, 4, 8, 12}) {
        std::vector<FramePair> eval_pairs = regenerate_eval_pairs(gen, gap);
        EvalOptions opt;
        opt.mask_ratio = base.mask_ratio;
        opt.seed = base.seed;
        opt.workers = base.workers;
        rows.push_back({std::to_string(gap),
                        evaluate_model(ckpt->params, cfg.model, eval_pairs, opt).model});
      }
      break;
    }
    case SweepKind::beta: {
      for (double beta : {0.1, 0.2, 0.25, 0.5, 1.0}) {
        TrainConfig cfg = base;
        cfg.beta = beta;
        rows.push_back({format_double(beta), trained_setting_scores(cfg, data_dir)});
      }
      break;
    }
    case SweepKind::reparam: {
      for (bool enabled : {false, true}) {
        TrainConfig cfg = base;
        cfg.model.reparam_enabled = enabled;
        rows.push_back({enabled ? "on" : "off", trained_setting_scores(cfg, data_dir)});
      }
      break;
    }
    case SweepKind::kernel: {
      need_checkpoint();
      TrainConfig cfg = train_config_from_map(ConfigMap::parse(ckpt->config_text));
      std::vector<FramePair> eval_pairs = load_eval_split(data_dir);
      for (AttentionKernel k :
           {AttentionKernel::standard, AttentionKernel::chunked, AttentionKernel::adaptive}) {
        ModelConfig mc = cfg.model;
        mc.kernel = k;
        EvalOptions opt;
        opt.mask_ratio = base.mask_ratio;
        opt.seed = base.seed;
        opt.workers = base.workers;
        rows.push_back({kernel_name(k), evaluate_model(ckpt->params, mc, eval_pairs, opt).model});
      }
      break;
    }
  }
  return rows;
}

// -------------------------------------------------------------------- csv --

namespace {

void write_metric_row(std::ofstream& out, const EvalAggregate& agg) {
  out << agg.metrics.mse << ',' << agg.metrics.mae << ',' << agg.metrics.psnr << ','
      << agg.metrics.ssim << ',' << agg.metrics.fsim << ',' << agg.masked_mse << ','
      << agg.masked_mae << ',' << agg.masked_psnr << '\n';
}

}  // namespace

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("csv: cannot write " + path);
  out << "image_id,mse,mae,psnr,ssim,fsim\n";
  out.precision(10);
  for (const EvalRow& r : rows)
    out << r.id << ',' << r.metrics.mse << ',' << r.metrics.mae << ',' << r.metrics.psnr << ','
        << r.metrics.ssim << ',' << r.metrics.fsim << '\n';
}

void write_summary_csv(const std::string& path, const EvalSummary& summary) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("csv: cannot write " + path);
  out << "method,mse,mae,psnr,ssim,fsim,masked_mse,masked_mae,masked_psnr\n";
  out.precision(10);
  out << "model,";
  write_metric_row(out, summary.model);
  out << "mean_fill,";
  write_metric_row(out, summary.mean_fill);
  out << "copy_a1,";
  write_metric_row(out, summary.copy_a1);
}

void write_sweep_csv(const std::string& path, const std::string& setting_name,
                     const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("csv: cannot write " + path);
  out << setting_name << ",mse,mae,psnr,ssim,fsim,masked_mse,masked_mae,masked_psnr\n";
  out.precision(10);
  for (const SweepRow& r : rows) {
    out << r.setting << ',';
    write_metric_row(out, r.scores);
  }
}

}  // namespace siammcvae
