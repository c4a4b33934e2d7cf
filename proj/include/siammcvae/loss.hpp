#pragma once

#include <string>

#include "siammcvae/tensor.hpp"
#include "siammcvae/vision.hpp"

namespace siammcvae {

// Two selectable KL forms: `paper` keeps the -sum(log S) weighting of the
// published objective; `standard_gaussian` is the textbook -2 sum(log S).
enum class KlForm { paper, standard_gaussian };

const char* kl_form_name(KlForm f);
KlForm kl_form_from_name(const std::string& name);

struct LossReport {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double beta = 0.0;
};

// Mean squared error over the masked patch entries:
// |G - R|_F^2 / (P^2 C |masked|). Visible rows of G equal R by composition,
// so only masked rows can contribute.
Tensor recon_loss(const Tensor& output, const Tensor& target, const MaskSet& mask,
                  const PatchGrid& grid);

// (|M|_F^2 + |S|_F^2 - sum log S) / (2 (N+1) D') - 1/2 in the paper form.
Tensor kl_loss(const Tensor& mean, const Tensor& stddev, KlForm form = KlForm::paper);

struct TotalLoss {
  Tensor total;
  Tensor recon;
  Tensor kl;
  double beta = 0.0;
  LossReport report() const;
};

TotalLoss total_loss(const Tensor& output, const Tensor& target, const MaskSet& mask,
                     const PatchGrid& grid, const Tensor& mean, const Tensor& stddev,
                     double beta, KlForm form = KlForm::paper);

}  // namespace siammcvae
