#pragma once

#include <vector>

#include "siammcvae/common.hpp"
#include "siammcvae/tensor.hpp"

namespace siammcvae {

// Image/patch geometry. Patches are enumerated row-major over the grid;
// within a patch, values are ordered (pixel row, pixel col, channel).
struct PatchGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  int patch = 0;

  PatchGrid() = default;
  PatchGrid(int h, int w, int c, int p);

  int grid_rows() const { return height / patch; }
  int grid_cols() const { return width / patch; }
  int patch_count() const { return grid_rows() * grid_cols(); }  // N
  int patch_dim() const { return patch * patch * channels; }     // P^2 C
};

// Sorted set of masked patch indices plus its complement ordering.
struct MaskSet {
  std::vector<int> masked;  // strictly ascending, in [0, total)
  int total = 0;

  MaskSet() = default;
  MaskSet(std::vector<int> masked_indices, int total_patches);

  std::vector<int> visible() const;  // ascending complement
  bool is_masked(int index) const;
  int masked_count() const { return static_cast<int>(masked.size()); }
};

// Uniform sample without replacement of round(ratio * n) indices.
// Deterministic given the generator state; a mask that would be empty or
// total is rejected as degenerate.
MaskSet sample_mask(double ratio, int n, Rng& rng);

std::vector<int> all_patches(int n);  // 0..n-1

// Flattens the selected patches of an H x W x C image into rows.
Tensor patchify(const Tensor& image, const PatchGrid& grid, const std::vector<int>& keep);

// Exact inverse of patchify with keep = all.
Tensor unpatchify(const Tensor& rows, const PatchGrid& grid);

// Row index maps. gather_rows permits repeated indices (used to tile the
// mask token); scatter_rows requires strictly ascending positions and fills
// the remaining rows with zeros.
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);
Tensor scatter_rows(const Tensor& x, const std::vector<int>& positions, int total);

// Final composition: visible rows come from the input's visible patches,
// masked rows from the decoded sequence (its row 0 is the class-token slot
// and is discarded).
Tensor compose_output(const Tensor& decoded, const Tensor& visible_patches, const MaskSet& mask);

}  // namespace siammcvae
