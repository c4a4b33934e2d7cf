#include "siammcvae/loss.hpp"

namespace siammcvae {

const char* kl_form_name(KlForm f) {
  return f == KlForm::paper ? "paper" : "standard";
}

KlForm kl_form_from_name(const std::string& name) {
  if (name == "paper") return KlForm::paper;
  if (name == "standard") return KlForm::standard_gaussian;
  throw ValueError("unknown kl form '" + name + "'");
}

Tensor recon_loss(const Tensor& output, const Tensor& target, const MaskSet& mask,
                  const PatchGrid& grid) {
  if (mask.masked.empty()) throw ValueError("recon_loss: mask is degenerate (no masked patches)");
  if (output.rank() != 2 || output.shape() != target.shape())
    throw ShapeError("recon_loss: output " + shape_str(output.shape()) + " vs target " +
                     shape_str(target.shape()));
  if (output.rows() != mask.total || output.cols() != grid.patch_dim())
    throw ShapeError("recon_loss: rows do not match the grid");
  double denom = static_cast<double>(grid.patch_dim()) * mask.masked_count();
  return div_scalar(frobenius_sq(sub(output, target)), denom);
}

Tensor kl_loss(const Tensor& mean, const Tensor& stddev, KlForm form) {
  if (mean.shape() != stddev.shape())
    throw ShapeError("kl_loss: mean " + shape_str(mean.shape()) + " vs stddev " +
                     shape_str(stddev.shape()));
  for (double s : stddev.values())
    if (s <= 0.0) throw ValueError("kl_loss: stddev must be positive");
  double log_weight = form == KlForm::paper ? 1.0 : 2.0;
  Tensor norm_terms = add(frobenius_sq(mean), frobenius_sq(stddev));
  Tensor log_term = scale(sum(log(stddev)), -log_weight);
  double denom = 2.0 * static_cast<double>(mean.size());
  return add_scalar(div_scalar(add(norm_terms, log_term), denom), -0.5);
}

LossReport TotalLoss::report() const {
  return {total.value(), recon.value(), kl.value(), beta};
}

TotalLoss total_loss(const Tensor& output, const Tensor& target, const MaskSet& mask,
                     const PatchGrid& grid, const Tensor& mean, const Tensor& stddev,
                     double beta, KlForm form) {
  if (beta < 0.0) throw ValueError("total_loss: beta must be non-negative");
  TotalLoss out;
  out.recon = recon_loss(output, target, mask, grid);
  out.kl = kl_loss(mean, stddev, form);
  out.total = add(out.recon, scale(out.kl, beta));
  out.beta = beta;
  return out;
}

}  // namespace siammcvae
