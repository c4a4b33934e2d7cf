#include "siammcvae/vision.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace siammcvae {

PatchGrid::PatchGrid(int h, int w, int c, int p)
    : height(h), width(w), channels(c), patch(p) {
  if (h <= 0 || w <= 0 || c <= 0 || p <= 0)
    throw ValueError("PatchGrid: extents must be positive");
  if (h % p != 0 || w % p != 0)
    throw ValueError("PatchGrid: patch side " + std::to_string(p) +
                     " does not divide " + std::to_string(h) + "x" + std::to_string(w));
}

MaskSet::MaskSet(std::vector<int> masked_indices, int total_patches)
    : masked(std::move(masked_indices)), total(total_patches) {
  if (total <= 0) throw ValueError("MaskSet: total must be positive");
  for (size_t i = 0; i < masked.size(); ++i) {
    if (masked[i] < 0 || masked[i] >= total)
      throw IndexError("MaskSet: index " + std::to_string(masked[i]) + " outside [0, " +
                       std::to_string(total) + ")");
    if (i > 0 && masked[i] <= masked[i - 1])
      throw ValueError("MaskSet: indices must be strictly ascending");
  }
}

std::vector<int> MaskSet::visible() const {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(total) - masked.size());
  size_t j = 0;
  for (int i = 0; i < total; ++i) {
    if (j < masked.size() && masked[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

bool MaskSet::is_masked(int index) const {
  return std::binary_search(masked.begin(), masked.end(), index);
}

MaskSet sample_mask(double ratio, int n, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ValueError("sample_mask: ratio must lie in (0, 1), got " + std::to_string(ratio));
  if (n <= 0) throw ValueError("sample_mask: patch count must be positive");
  int k = static_cast<int>(std::llround(ratio * n));
  if (k <= 0 || k >= n)
    throw ValueError("sample_mask: degenerate mask, round(" + std::to_string(ratio) + " * " +
                     std::to_string(n) + ") = " + std::to_string(k));
  // Partial Fisher-Yates; the first k slots are the sample.
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(n - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  std::vector<int> masked(idx.begin(), idx.begin() + k);
  std::sort(masked.begin(), masked.end());
  return MaskSet(std::move(masked), n);
}

std::vector<int> all_patches(int n) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = i;
  return out;
}

namespace {

void check_keep(const std::vector<int>& keep, int n, const char* op) {
  if (keep.empty()) throw IndexError(std::string(op) + ": empty index list");
  for (size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 0 || keep[i] >= n)
      throw IndexError(std::string(op) + ": index " + std::to_string(keep[i]) +
                       " outside [0, " + std::to_string(n) + ")");
    if (i > 0 && keep[i] <= keep[i - 1])
      throw IndexError(std::string(op) + ": indices must be strictly ascending");
  }
}

// Gather with an arbitrary flat index map: out[i] = in[map[i]].
Tensor gather_map(const Tensor& x, Shape out_shape, std::vector<int64_t> map, const char* op) {
  const auto& xv = x.values();
  std::vector<double> out(map.size());
  for (size_t i = 0; i < map.size(); ++i) out[i] = xv[static_cast<size_t>(map[i])];
  Tape* tape = common_tape({&x});
  int nx = x.node();
  if (tape == nullptr) {
    check_finite(op, out);
    return Tensor::constant(std::move(out_shape), std::move(out));
  }
  auto shared_map = std::make_shared<std::vector<int64_t>>(std::move(map));
  return tape->record(std::move(out_shape), std::move(out), op,
                      [nx, shared_map](Tape& t, const std::vector<double>& dout) {
                        if (nx < 0) return;
                        auto& gx = t.grad_buffer(nx);
                        for (size_t i = 0; i < dout.size(); ++i)
                          gx[static_cast<size_t>((*shared_map)[i])] += dout[i];
                      });
}

}  // namespace

Tensor patchify(const Tensor& image, const PatchGrid& grid, const std::vector<int>& keep) {
  if (image.rank() != 3 || image.dim(0) != grid.height || image.dim(1) != grid.width ||
      image.dim(2) != grid.channels)
    throw ShapeError("patchify: image shape " + shape_str(image.shape()) +
                     " does not match the grid");
  check_keep(keep, grid.patch_count(), "patchify");

  int p = grid.patch, c = grid.channels, w = grid.width;
  int gc = grid.grid_cols();
  int pd = grid.patch_dim();
  std::vector<int64_t> map;
  map.reserve(keep.size() * static_cast<size_t>(pd));
  for (int q : keep) {
    int gy = q / gc, gx = q % gc;
    for (int py = 0; py < p; ++py)
      for (int px = 0; px < p; ++px)
        for (int ch = 0; ch < c; ++ch)
          map.push_back((static_cast<int64_t>(gy * p + py) * w + (gx * p + px)) * c + ch);
  }
  return gather_map(image, {static_cast<int>(keep.size()), pd}, std::move(map), "patchify");
}

Tensor unpatchify(const Tensor& rows, const PatchGrid& grid) {
  int n = grid.patch_count();
  if (rows.rank() != 2 || rows.cols() != grid.patch_dim())
    throw ShapeError("unpatchify: rows shape " + shape_str(rows.shape()) +
                     " does not match patch dim " + std::to_string(grid.patch_dim()));
  if (rows.rows() != n)
    throw ShapeError("unpatchify: expected " + std::to_string(n) + " rows, got " +
                     std::to_string(rows.rows()));

  int p = grid.patch, c = grid.channels, w = grid.width, h = grid.height;
  int gc = grid.grid_cols();
  int pd = grid.patch_dim();
  // map from image position to row position (inverse of patchify with keep = all)
  std::vector<int64_t> map(static_cast<size_t>(h) * w * c);
  for (int q = 0; q < n; ++q) {
    int gy = q / gc, gx = q % gc;
    int64_t base = static_cast<int64_t>(q) * pd;
    int64_t off = 0;
    for (int py = 0; py < p; ++py)
      for (int px = 0; px < p; ++px)
        for (int ch = 0; ch < c; ++ch)
          map[static_cast<size_t>(((static_cast<int64_t>(gy * p + py) * w + (gx * p + px)) * c +
                                   ch))] = base + off++;
  }
  return gather_map(rows, {h, w, c}, std::move(map), "unpatchify");
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  if (x.rank() != 2) throw ShapeError("gather_rows: input must be rank-2");
  if (rows.empty()) throw IndexError("gather_rows: empty index list");
  int d = x.cols();
  std::vector<int64_t> map;
  map.reserve(rows.size() * static_cast<size_t>(d));
  for (int r : rows) {
    if (r < 0 || r >= x.rows())
      throw IndexError("gather_rows: row " + std::to_string(r) + " outside [0, " +
                       std::to_string(x.rows()) + ")");
    for (int j = 0; j < d; ++j) map.push_back(static_cast<int64_t>(r) * d + j);
  }
  return gather_map(x, {static_cast<int>(rows.size()), d}, std::move(map), "gather_rows");
}

Tensor scatter_rows(const Tensor& x, const std::vector<int>& positions, int total) {
  if (x.rank() != 2) throw ShapeError("scatter_rows: input must be rank-2");
  if (static_cast<int>(positions.size()) != x.rows())
    throw IndexError("scatter_rows: " + std::to_string(positions.size()) +
                     " positions for " + std::to_string(x.rows()) + " rows");
  check_keep(positions, total, "scatter_rows");

  int d = x.cols();
  const auto& xv = x.values();
  std::vector<double> out(static_cast<size_t>(total) * d, 0.0);
  for (size_t i = 0; i < positions.size(); ++i)
    std::copy_n(xv.data() + i * static_cast<size_t>(d), d,
                out.data() + static_cast<size_t>(positions[i]) * d);

  Tape* tape = common_tape({&x});
  int nx = x.node();
  auto pos = std::make_shared<std::vector<int>>(positions);
  if (tape == nullptr) {
    check_finite("scatter_rows", out);
    return Tensor::constant({total, d}, std::move(out));
  }
  return tape->record({total, d}, std::move(out), "scatter_rows",
                      [nx, pos, d](Tape& t, const std::vector<double>& dout) {
                        if (nx < 0) return;
                        auto& gx = t.grad_buffer(nx);
                        for (size_t i = 0; i < pos->size(); ++i)
                          for (int j = 0; j < d; ++j)
                            gx[i * static_cast<size_t>(d) + j] +=
                                dout[static_cast<size_t>((*pos)[i]) * d + j];
                      });
}

Tensor compose_output(const Tensor& decoded, const Tensor& visible_patches, const MaskSet& mask) {
  int n = mask.total;
  if (decoded.rank() != 2 || decoded.rows() != n + 1)
    throw ShapeError("compose_output: decoded sequence must have " + std::to_string(n + 1) +
                     " rows, got " + shape_str(decoded.shape()));
  std::vector<int> vis = mask.visible();
  if (visible_patches.rank() != 2 ||
      visible_patches.rows() != static_cast<int>(vis.size()) ||
      visible_patches.cols() != decoded.cols())
    throw ShapeError("compose_output: visible patches shape " +
                     shape_str(visible_patches.shape()) + " does not match");

  if (mask.masked.empty()) return scatter_rows(visible_patches, vis, n);

  std::vector<int> masked_rows;  // +1 skips the class-token slot
  masked_rows.reserve(mask.masked.size());
  for (int q : mask.masked) masked_rows.push_back(q + 1);
  Tensor predicted = gather_rows(decoded, masked_rows);
  Tensor from_pred = scatter_rows(predicted, mask.masked, n);
  if (vis.empty()) return from_pred;
  return add(scatter_rows(visible_patches, vis, n), from_pred);
}

}  // namespace siammcvae
