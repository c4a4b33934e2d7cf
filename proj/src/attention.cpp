#include <Eigen/Core>

#include <cmath>
#include <memory>

#include "siammcvae/model.hpp"

namespace siammcvae {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, const char* op) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape())
    throw ShapeError(std::string(op) + ": expected three (heads x n x head_dim) tensors, got " +
                     shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                     shape_str(v.shape()));
}

}  // namespace

Tensor attention_standard(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv(q, k, v, "attention_standard");
  const int heads = q.dim(0), n = q.dim(1), dh = q.dim(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int64_t per_head = static_cast<int64_t>(n) * dh;

  std::vector<double> out(q.values().size());
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(heads) *
                                                     static_cast<size_t>(n) * n);
  for (int h = 0; h < heads; ++h) {
    MapConst qh(q.values().data() + h * per_head, n, dh);
    MapConst kh(k.values().data() + h * per_head, n, dh);
    MapConst vh(v.values().data() + h * per_head, n, dh);
    MapMat ph(probs->data() + static_cast<int64_t>(h) * n * n, n, n);
    ph.noalias() = qh * kh.transpose() * scale;
    for (int i = 0; i < n; ++i) {
      double mx = ph.row(i).maxCoeff();
      double denom = 0.0;
      for (int j = 0; j < n; ++j) {
        double e = std::exp(ph(i, j) - mx);
        ph(i, j) = e;
        denom += e;
      }
      ph.row(i) /= denom;
    }
    MapMat oh(out.data() + h * per_head, n, dh);
    oh.noalias() = ph * vh;
  }

  Tape* tape = common_tape({&q, &k, &v});
  int nq = q.node(), nk = k.node(), nv = v.node();
  auto qv = q.data_ptr(), kv = k.data_ptr(), vv = v.data_ptr();
  auto pull = [=](Tape& t, const std::vector<double>& dout) {
    std::vector<double>* gq = nq >= 0 ? &t.grad_buffer(nq) : nullptr;
    std::vector<double>* gk = nk >= 0 ? &t.grad_buffer(nk) : nullptr;
    std::vector<double>* gv = nv >= 0 ? &t.grad_buffer(nv) : nullptr;
    RowMat dp(n, n), ds(n, n);
    for (int h = 0; h < heads; ++h) {
      MapConst qh(qv->data() + h * per_head, n, dh);
      MapConst kh(kv->data() + h * per_head, n, dh);
      MapConst vh(vv->data() + h * per_head, n, dh);
      MapConst ph(probs->data() + static_cast<int64_t>(h) * n * n, n, n);
      MapConst doh(dout.data() + h * per_head, n, dh);
      if (gv) MapMat(gv->data() + h * per_head, n, dh).noalias() += ph.transpose() * doh;
      if (!gq && !gk) continue;
      dp.noalias() = doh * vh.transpose();
      for (int i = 0; i < n; ++i) {
        double dot = ph.row(i).dot(dp.row(i));
        ds.row(i) = ph.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
      }
      ds *= scale;
      if (gq) MapMat(gq->data() + h * per_head, n, dh).noalias() += ds * kh;
      if (gk) MapMat(gk->data() + h * per_head, n, dh).noalias() += ds.transpose() * qh;
    }
  };
  if (tape == nullptr) {
    check_finite("attention_standard", out);
    return Tensor::constant(q.shape(), std::move(out));
  }
  return tape->record(q.shape(), std::move(out), "attention_standard", pull);
}

Tensor attention_chunked(const Tensor& q, const Tensor& k, const Tensor& v, int chunk_size) {
  check_qkv(q, k, v, "attention_chunked");
  if (chunk_size < 1) throw ValueError("attention_chunked: chunk size must be positive");
  const int heads = q.dim(0), n = q.dim(1), dh = q.dim(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int64_t per_head = static_cast<int64_t>(n) * dh;

  std::vector<double> out(q.values().size());
  // per-row log-sum-exp of the scaled scores, saved for the backward pass
  auto lse = std::make_shared<std::vector<double>>(static_cast<size_t>(heads) * n);

  for (int h = 0; h < heads; ++h) {
    MapConst qh(q.values().data() + h * per_head, n, dh);
    MapConst kh(k.values().data() + h * per_head, n, dh);
    MapConst vh(v.values().data() + h * per_head, n, dh);
    MapMat oh(out.data() + h * per_head, n, dh);
    for (int q0 = 0; q0 < n; q0 += chunk_size) {
      int qn = std::min(chunk_size, n - q0);
      RowMat acc = RowMat::Zero(qn, dh);
      Eigen::VectorXd running_max = Eigen::VectorXd::Constant(qn, -1e300);
      Eigen::VectorXd denom = Eigen::VectorXd::Zero(qn);
      RowMat scores(qn, chunk_size);
      for (int k0 = 0; k0 < n; k0 += chunk_size) {
        int kn = std::min(chunk_size, n - k0);
        scores.leftCols(kn).noalias() =
            qh.middleRows(q0, qn) * kh.middleRows(k0, kn).transpose() * scale;
        for (int i = 0; i < qn; ++i) {
          double block_max = scores.row(i).head(kn).maxCoeff();
          double new_max = std::max(running_max(i), block_max);
          double correction = std::exp(running_max(i) - new_max);
          denom(i) *= correction;
          acc.row(i) *= correction;
          for (int j = 0; j < kn; ++j) {
            double p = std::exp(scores(i, j) - new_max);
            denom(i) += p;
            acc.row(i).noalias() += p * vh.row(k0 + j);
          }
          running_max(i) = new_max;
        }
      }
      for (int i = 0; i < qn; ++i) {
        oh.row(q0 + i) = acc.row(i) / denom(i);
        (*lse)[static_cast<size_t>(h) * n + q0 + i] = running_max(i) + std::log(denom(i));
      }
    }
  }

  Tape* tape = common_tape({&q, &k, &v});
  int nq = q.node(), nk = k.node(), nv = v.node();
  auto qv = q.data_ptr(), kv = k.data_ptr(), vv = v.data_ptr();
  auto ov = std::make_shared<std::vector<double>>(out);
  auto pull = [=](Tape& t, const std::vector<double>& dout) {
    std::vector<double>* gq = nq >= 0 ? &t.grad_buffer(nq) : nullptr;
    std::vector<double>* gk = nk >= 0 ? &t.grad_buffer(nk) : nullptr;
    std::vector<double>* gv = nv >= 0 ? &t.grad_buffer(nv) : nullptr;
    for (int h = 0; h < heads; ++h) {
      MapConst qh(qv->data() + h * per_head, n, dh);
      MapConst kh(kv->data() + h * per_head, n, dh);
      MapConst vh(vv->data() + h * per_head, n, dh);
      MapConst oh(ov->data() + h * per_head, n, dh);
      MapConst doh(dout.data() + h * per_head, n, dh);
      // row_dot_i = dO_i . O_i, the softmax-jacobian correction term
      Eigen::VectorXd row_dot(n);
      for (int i = 0; i < n; ++i) row_dot(i) = doh.row(i).dot(oh.row(i));
      RowMat p(chunk_size, chunk_size), dp(chunk_size, chunk_size);
      for (int q0 = 0; q0 < n; q0 += chunk_size) {
        int qn = std::min(chunk_size, n - q0);
        for (int k0 = 0; k0 < n; k0 += chunk_size) {
          int kn = std::min(chunk_size, n - k0);
          // recompute the probability block from Q, K and the saved lse
          p.topLeftCorner(qn, kn).noalias() =
              qh.middleRows(q0, qn) * kh.middleRows(k0, kn).transpose() * scale;
          for (int i = 0; i < qn; ++i) {
            double l = (*lse)[static_cast<size_t>(h) * n + q0 + i];
            for (int j = 0; j < kn; ++j) p(i, j) = std::exp(p(i, j) - l);
          }
          if (gv)
            MapMat(gv->data() + h * per_head, n, dh).middleRows(k0, kn).noalias() +=
                p.topLeftCorner(qn, kn).transpose() * doh.middleRows(q0, qn);
          if (!gq && !gk) continue;
          dp.topLeftCorner(qn, kn).noalias() =
              doh.middleRows(q0, qn) * vh.middleRows(k0, kn).transpose();
          for (int i = 0; i < qn; ++i)
            for (int j = 0; j < kn; ++j)
              dp(i, j) = p(i, j) * (dp(i, j) - row_dot(q0 + i)) * scale;
          if (gq)
            MapMat(gq->data() + h * per_head, n, dh).middleRows(q0, qn).noalias() +=
                dp.topLeftCorner(qn, kn) * kh.middleRows(k0, kn);
          if (gk)
            MapMat(gk->data() + h * per_head, n, dh).middleRows(k0, kn).noalias() +=
                dp.topLeftCorner(qn, kn).transpose() * qh.middleRows(q0, qn);
        }
      }
    }
  };
  if (tape == nullptr) {
    check_finite("attention_chunked", out);
    return Tensor::constant(q.shape(), std::move(out));
  }
  return tape->record(q.shape(), std::move(out), "attention_chunked", pull);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const ModelConfig& cfg,
                 AttentionStats* stats) {
  switch (cfg.kernel) {
    case AttentionKernel::standard:
      if (stats) stats->standard_calls++;
      return attention_standard(q, k, v);
    case AttentionKernel::chunked:
      if (stats) stats->chunked_calls++;
      return attention_chunked(q, k, v, cfg.chunk_size);
    case AttentionKernel::adaptive: {
      // short sequences take the dense kernel, long ones the streaming one
      if (q.dim(1) <= cfg.adaptive_threshold) {
        if (stats) stats->standard_calls++;
        return attention_standard(q, k, v);
      }
      if (stats) stats->chunked_calls++;
      return attention_chunked(q, k, v, cfg.chunk_size);
    }
  }
  throw ContractError("attention: unknown kernel");
}

Tensor split_heads(const Tensor& x, int heads) {
  if (x.rank() != 2) throw ShapeError("split_heads: input must be rank-2");
  int n = x.rows(), d = x.cols();
  if (heads < 1 || d % heads != 0)
    throw ShapeError("split_heads: " + std::to_string(heads) + " heads do not divide width " +
                     std::to_string(d));
  int dh = d / heads;
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dh; ++j)
        out[(static_cast<size_t>(h) * n + i) * dh + j] = xv[static_cast<size_t>(i) * d + h * dh + j];

  Tape* tape = common_tape({&x});
  int nx = x.node();
  auto pull = [=](Tape& t, const std::vector<double>& dout) {
    if (nx < 0) return;
    auto& gx = t.grad_buffer(nx);
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dh; ++j)
          gx[static_cast<size_t>(i) * d + h * dh + j] += dout[(static_cast<size_t>(h) * n + i) * dh + j];
  };
  if (tape == nullptr) {
    check_finite("split_heads", out);
    return Tensor::constant({heads, n, dh}, std::move(out));
  }
  return tape->record({heads, n, dh}, std::move(out), "split_heads", pull);
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("merge_heads: input must be rank-3");
  int heads = x.dim(0), n = x.dim(1), dh = x.dim(2);
  int d = heads * dh;
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dh; ++j)
        out[static_cast<size_t>(i) * d + h * dh + j] = xv[(static_cast<size_t>(h) * n + i) * dh + j];

  Tape* tape = common_tape({&x});
  int nx = x.node();
  auto pull = [=](Tape& t, const std::vector<double>& dout) {
    if (nx < 0) return;
    auto& gx = t.grad_buffer(nx);
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < dh; ++j)
          gx[(static_cast<size_t>(h) * n + i) * dh + j] += dout[static_cast<size_t>(i) * d + h * dh + j];
  };
  if (tape == nullptr) {
    check_finite("merge_heads", out);
    return Tensor::constant({n, d}, std::move(out));
  }
  return tape->record({n, d}, std::move(out), "merge_heads", pull);
}

}  // namespace siammcvae
