#include "siammcvae/model.hpp"

#include <cmath>

namespace siammcvae {

const char* kernel_name(AttentionKernel k) {
  switch (k) {
    case AttentionKernel::standard: return "standard";
    case AttentionKernel::chunked: return "chunked";
    case AttentionKernel::adaptive: return "adaptive";
  }
  return "?";
}

AttentionKernel kernel_from_name(const std::string& name) {
  if (name == "standard") return AttentionKernel::standard;
  if (name == "chunked") return AttentionKernel::chunked;
  if (name == "adaptive") return AttentionKernel::adaptive;
  throw ValueError("unknown attention kernel '" + name + "'");
}

void ModelConfig::validate() const {
  if (width <= 0 || latent_width <= 0) throw ValueError("model: widths must be positive");
  if (depth < 1 || dec_depth < 1) throw ValueError("model: depths must be at least 1");
  if (heads_enc < 1 || width % heads_enc != 0)
    throw ValueError("model: heads_enc must divide width");
  if (heads_dec < 1 || latent_width % heads_dec != 0)
    throw ValueError("model: heads_dec must divide latent_width");
  if (chunk_size < 1) throw ValueError("model: chunk_size must be positive");
  if (adaptive_threshold < 1) throw ValueError("model: adaptive_threshold must be positive");
}

// ------------------------------------------------------------ ParamStore --

int ParamStore::add(std::string name, Shape shape) {
  if (by_name_.count(name)) throw ContractError("ParamStore: duplicate name " + name);
  shape_size(shape);  // validates extents
  ParamRecord rec;
  rec.name = std::move(name);
  rec.shape = std::move(shape);
  rec.values.assign(static_cast<size_t>(shape_size(rec.shape)), 0.0);
  records_.push_back(std::move(rec));
  int idx = static_cast<int>(records_.size()) - 1;
  by_name_[records_.back().name] = idx;
  return idx;
}

int ParamStore::index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ContractError("ParamStore: unknown name " + name);
  return it->second;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& r : records_) n += static_cast<int64_t>(r.values.size());
  return n;
}

namespace {

void add_block_params(ParamStore& s, const std::string& prefix, int dim) {
  s.add(prefix + ".norm1.gain", {dim});
  s.add(prefix + ".norm1.bias", {dim});
  s.add(prefix + ".attn.wq", {dim, dim});
  s.add(prefix + ".attn.bq", {dim});
  s.add(prefix + ".attn.wk", {dim, dim});
  s.add(prefix + ".attn.bk", {dim});
  s.add(prefix + ".attn.wv", {dim, dim});
  s.add(prefix + ".attn.bv", {dim});
  s.add(prefix + ".attn.wo", {dim, dim});
  s.add(prefix + ".attn.bo", {dim});
  s.add(prefix + ".norm2.gain", {dim});
  s.add(prefix + ".norm2.bias", {dim});
  s.add(prefix + ".mlp.w1", {4 * dim, dim});
  s.add(prefix + ".mlp.b1", {4 * dim});
  s.add(prefix + ".mlp.w2", {dim, 4 * dim});
  s.add(prefix + ".mlp.b2", {dim});
}

}  // namespace

ParamStore param_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.width, dp = cfg.latent_width;
  const int n = cfg.grid.patch_count(), pd = cfg.grid.patch_dim();
  ParamStore s;
  s.add("enc.cls", {d});
  s.add("enc.patch_proj", {d, pd});
  s.add("enc.patch_bias", {d, n});
  s.add("enc.pos", {n + 1, d});
  for (int l = 0; l < cfg.depth; ++l) add_block_params(s, "enc.blk" + std::to_string(l), d);
  s.add("enc.norm.gain", {d});
  s.add("enc.norm.bias", {d});
  s.add("enc.out_proj", {dp, d});
  s.add("enc.out_bias", {dp, n + 1});
  s.add("enc.mask_token", {dp});
  s.add("rp.mean_w", {dp, 2 * dp});
  s.add("rp.mean_bias", {dp, n + 1});
  s.add("rp.logstd_w", {dp, 2 * dp});
  s.add("rp.logstd_bias", {dp, n + 1});
  s.add("dec.in_proj", {dp, 2 * dp});
  s.add("dec.in_bias", {dp, n + 1});
  s.add("dec.pos", {n + 1, dp});
  for (int l = 0; l < cfg.dec_depth; ++l) add_block_params(s, "dec.blk" + std::to_string(l), dp);
  s.add("dec.norm.gain", {dp});
  s.add("dec.norm.bias", {dp});
  s.add("dec.head_w", {dp, pd});
  s.add("dec.head_bias", {pd, n + 1});
  return s;
}

ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
  ParamStore s = param_layout(cfg);
  const double sigma = 0.02;
  for (int i = 0; i < s.count(); ++i) {
    ParamRecord& rec = s.record(i);
    bool is_gain = rec.name.ends_with(".gain");
    bool is_bias = rec.name.ends_with(".bias") || rec.name.find("_bias") != std::string::npos ||
                   rec.name.ends_with(".bq") || rec.name.ends_with(".bk") ||
                   rec.name.ends_with(".bv") || rec.name.ends_with(".bo") ||
                   rec.name.ends_with(".b1") || rec.name.ends_with(".b2");
    if (is_gain) {
      std::fill(rec.values.begin(), rec.values.end(), 1.0);
    } else if (is_bias) {
      // zeros (already)
    } else {
      for (auto& v : rec.values) v = sigma * rng.normal();
    }
  }
  return s;
}

// ------------------------------------------------------------- binding ----

namespace {

struct Binder {
  const ParamStore& store;
  ModelView& view;
  Tape* tape;

  Tensor get(const std::string& name) {
    const ParamRecord& rec = store.record(store.index(name));
    Tensor t = tape ? tape->leaf(rec.shape, rec.values)
                    : Tensor::constant(rec.shape, rec.values);
    view.leaves.push_back(t);
    return t;
  }

  BlockView block(const std::string& prefix) {
    BlockView b;
    b.norm1_gain = get(prefix + ".norm1.gain");
    b.norm1_bias = get(prefix + ".norm1.bias");
    b.wq = get(prefix + ".attn.wq");
    b.bq = get(prefix + ".attn.bq");
    b.wk = get(prefix + ".attn.wk");
    b.bk = get(prefix + ".attn.bk");
    b.wv = get(prefix + ".attn.wv");
    b.bv = get(prefix + ".attn.bv");
    b.wo = get(prefix + ".attn.wo");
    b.bo = get(prefix + ".attn.bo");
    b.norm2_gain = get(prefix + ".norm2.gain");
    b.norm2_bias = get(prefix + ".norm2.bias");
    b.mlp_w1 = get(prefix + ".mlp.w1");
    b.mlp_b1 = get(prefix + ".mlp.b1");
    b.mlp_w2 = get(prefix + ".mlp.w2");
    b.mlp_b2 = get(prefix + ".mlp.b2");
    return b;
  }
};

ModelView bind_impl(Tape* tape, const ParamStore& store, const ModelConfig& cfg) {
  ModelView view;
  Binder b{store, view, tape};
  view.enc.cls_token = b.get("enc.cls");
  view.enc.patch_proj = b.get("enc.patch_proj");
  view.enc.patch_bias = b.get("enc.patch_bias");
  view.enc.pos_embed = b.get("enc.pos");
  for (int l = 0; l < cfg.depth; ++l)
    view.enc.blocks.push_back(b.block("enc.blk" + std::to_string(l)));
  view.enc.final_gain = b.get("enc.norm.gain");
  view.enc.final_bias = b.get("enc.norm.bias");
  view.enc.out_proj = b.get("enc.out_proj");
  view.enc.out_bias = b.get("enc.out_bias");
  view.enc.mask_token = b.get("enc.mask_token");
  view.rp.mean_w = b.get("rp.mean_w");
  view.rp.mean_bias = b.get("rp.mean_bias");
  view.rp.logstd_w = b.get("rp.logstd_w");
  view.rp.logstd_bias = b.get("rp.logstd_bias");
  view.dec.in_proj = b.get("dec.in_proj");
  view.dec.in_bias = b.get("dec.in_bias");
  view.dec.pos_embed = b.get("dec.pos");
  for (int l = 0; l < cfg.dec_depth; ++l)
    view.dec.blocks.push_back(b.block("dec.blk" + std::to_string(l)));
  view.dec.final_gain = b.get("dec.norm.gain");
  view.dec.final_bias = b.get("dec.norm.bias");
  view.dec.head_w = b.get("dec.head_w");
  view.dec.head_bias = b.get("dec.head_bias");
  return view;
}

}  // namespace

ModelView bind_params(Tape& tape, const ParamStore& store, const ModelConfig& cfg) {
  return bind_impl(&tape, store, cfg);
}

ModelView bind_constants(const ParamStore& store, const ModelConfig& cfg) {
  return bind_impl(nullptr, store, cfg);
}

// --------------------------------------------------------------- blocks ----

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul_nt(x, w), b);
}

Tensor transformer_block(const Tensor& x, const BlockView& blk, int heads,
                         const ModelConfig& cfg, AttentionStats* stats) {
  Tensor normed = layernorm(x, blk.norm1_gain, blk.norm1_bias);
  Tensor q = split_heads(linear(normed, blk.wq, blk.bq), heads);
  Tensor k = split_heads(linear(normed, blk.wk, blk.bk), heads);
  Tensor v = split_heads(linear(normed, blk.wv, blk.bv), heads);
  Tensor mixed = merge_heads(attention(q, k, v, cfg, stats));
  Tensor after_attn = add(x, linear(mixed, blk.wo, blk.bo));

  Tensor normed2 = layernorm(after_attn, blk.norm2_gain, blk.norm2_bias);
  Tensor hidden = gelu(linear(normed2, blk.mlp_w1, blk.mlp_b1));
  return add(after_attn, linear(hidden, blk.mlp_w2, blk.mlp_b2));
}

// sequence positions for a kept-patch list: class slot then patch+1 rows
std::vector<int> seq_positions(const std::vector<int>& keep) {
  std::vector<int> pos;
  pos.reserve(keep.size() + 1);
  pos.push_back(0);
  for (int q : keep) pos.push_back(q + 1);
  return pos;
}

}  // namespace

Tensor siamvit_encode(const Tensor& patches, const std::vector<int>& keep,
                      const EncoderView& enc, const ModelConfig& cfg, AttentionStats* stats) {
  const int n = cfg.grid.patch_count();
  if (patches.rank() != 2 || patches.cols() != cfg.grid.patch_dim())
    throw ShapeError("siamvit_encode: patch rows of width " +
                     std::to_string(cfg.grid.patch_dim()) + " expected, got " +
                     shape_str(patches.shape()));
  if (static_cast<int>(keep.size()) != patches.rows())
    throw IndexError("siamvit_encode: keep list does not match patch rows");
  for (size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 0 || keep[i] >= n)
      throw IndexError("siamvit_encode: patch index out of range");
    if (i > 0 && keep[i] <= keep[i - 1])
      throw IndexError("siamvit_encode: keep indices must be ascending");
  }

  // patch embedding with the per-position bias columns sub-selected
  Tensor embedded = matmul_nt(patches, enc.patch_proj);
  embedded = add(embedded, gather_rows(transpose(enc.patch_bias), keep));
  Tensor seq = concat_rows(reshape(enc.cls_token, {1, cfg.width}), embedded);
  std::vector<int> pos = seq_positions(keep);
  seq = add(seq, gather_rows(enc.pos_embed, pos));

  for (const BlockView& blk : enc.blocks)
    seq = transformer_block(seq, blk, cfg.heads_enc, cfg, stats);

  Tensor normed = layernorm(seq, enc.final_gain, enc.final_bias);
  Tensor projected = matmul_nt(normed, enc.out_proj);
  return add(projected, gather_rows(transpose(enc.out_bias), pos));
}

Tensor assemble_latent_input(const Tensor& u1, const Tensor& u2, const MaskSet& mask,
                             const Tensor& mask_token) {
  const int n = mask.total;
  const int dp = u1.cols();
  std::vector<int> vis = mask.visible();
  if (u1.rows() != n + 1)
    throw ShapeError("assemble_latent_input: full-frame encoding must have " +
                     std::to_string(n + 1) + " rows");
  if (u2.rows() != static_cast<int>(vis.size()) + 1 || u2.cols() != dp)
    throw ShapeError("assemble_latent_input: masked-frame encoding shape " +
                     shape_str(u2.shape()) + " does not match");
  if (mask_token.size() != dp)
    throw ShapeError("assemble_latent_input: mask token width mismatch");

  // visible embeddings (and the class row) land at their original
  // positions; the tiled mask token fills the masked rows
  Tensor from_visible = scatter_rows(u2, seq_positions(vis), n + 1);
  Tensor merged = from_visible;
  if (!mask.masked.empty()) {
    std::vector<int> zeros(mask.masked.size(), 0);
    Tensor tiled = gather_rows(reshape(mask_token, {1, dp}), zeros);
    std::vector<int> masked_pos;
    masked_pos.reserve(mask.masked.size());
    for (int q : mask.masked) masked_pos.push_back(q + 1);
    merged = add(merged, scatter_rows(tiled, masked_pos, n + 1));
  }
  return concat_cols(u1, merged);
}

Latent reparameterize(const Tensor& u, const ReparamView& rp, const Tensor& noise, bool enabled) {
  Tensor mean_out = add(matmul_nt(u, rp.mean_w), transpose(rp.mean_bias));
  Latent out;
  out.mean = mean_out;
  if (!enabled) {
    out.z = mean_out;
    out.stddev = Tensor::full(mean_out.shape(), 1.0);
    return out;
  }
  Tensor log_std = add(matmul_nt(u, rp.logstd_w), transpose(rp.logstd_bias));
  out.stddev = exp(log_std);
  if (noise.defined()) {
    if (noise.shape() != mean_out.shape())
      throw ShapeError("reparameterize: noise shape " + shape_str(noise.shape()) +
                       " does not match latent shape " + shape_str(mean_out.shape()));
    out.z = add(mean_out, hadamard(out.stddev, noise));
  } else {
    out.z = mean_out;  // deterministic inference: zero noise
  }
  return out;
}

Tensor decode(const Tensor& z, const Tensor& u1, const DecoderView& dec, const ModelConfig& cfg,
              AttentionStats* stats) {
  Tensor joined = concat_cols(z, u1);
  Tensor seq = add(matmul_nt(joined, dec.in_proj), transpose(dec.in_bias));
  seq = add(seq, dec.pos_embed);
  for (const BlockView& blk : dec.blocks)
    seq = transformer_block(seq, blk, cfg.heads_dec, cfg, stats);
  Tensor normed = layernorm(seq, dec.final_gain, dec.final_bias);
  return add(matmul(normed, dec.head_w), transpose(dec.head_bias));
}

ForwardOut model_forward(const Tensor& frame1, const Tensor& frame2, const MaskSet& mask,
                         const ModelView& view, const ModelConfig& cfg, const Tensor& noise,
                         AttentionStats* stats) {
  const int n = cfg.grid.patch_count();
  if (mask.total != n)
    throw ShapeError("model_forward: mask covers " + std::to_string(mask.total) +
                     " patches, grid has " + std::to_string(n));
  std::vector<int> vis = mask.visible();

  Tensor x1 = patchify(frame1, cfg.grid, all_patches(n));
  Tensor x2_visible = patchify(frame2, cfg.grid, vis);

  Tensor u1 = siamvit_encode(x1, all_patches(n), view.enc, cfg, stats);
  Tensor u2 = siamvit_encode(x2_visible, vis, view.enc, cfg, stats);

  Tensor u = assemble_latent_input(u1, u2, mask, view.enc.mask_token);
  Latent latent = reparameterize(u, view.rp, noise, cfg.reparam_enabled);
  Tensor decoded = decode(latent.z, u1, view.dec, cfg, stats);

  ForwardOut out;
  out.patches = compose_output(decoded, x2_visible, mask);
  out.mean = latent.mean;
  out.stddev = latent.stddev;
  return out;
}

Tensor gaussian_noise(Shape shape, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor::constant(std::move(shape), std::move(v));
}

}  // namespace siammcvae
