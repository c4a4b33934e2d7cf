#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "siammcvae/common.hpp"
#include "siammcvae/tensor.hpp"
#include "siammcvae/vision.hpp"

namespace siammcvae {

enum class AttentionKernel { standard, chunked, adaptive };

const char* kernel_name(AttentionKernel k);
AttentionKernel kernel_from_name(const std::string& name);

struct ModelConfig {
  PatchGrid grid{64, 64, 3, 8};
  int width = 96;         // encoder embedding dim
  int latent_width = 48;  // projected / latent dim
  int depth = 4;          // encoder blocks
  int dec_depth = 2;      // decoder blocks
  int heads_enc = 4;
  int heads_dec = 4;
  AttentionKernel kernel = AttentionKernel::adaptive;
  bool reparam_enabled = true;
  int chunk_size = 64;            // query rows per chunk in the streaming kernel
  int adaptive_threshold = 128;   // standard for sequences up to this length

  void validate() const;
  int seq_len() const { return grid.patch_count() + 1; }  // class token included
};

// ------------------------------------------------------------- storage ----

struct ParamRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Named dense parameter arrays in a fixed order; the single source of truth
// for checkpoints and optimizer state.
class ParamStore {
 public:
  int add(std::string name, Shape shape);
  ParamRecord& record(int i) { return records_[static_cast<size_t>(i)]; }
  const ParamRecord& record(int i) const { return records_[static_cast<size_t>(i)]; }
  int index(const std::string& name) const;
  int count() const { return static_cast<int>(records_.size()); }
  int64_t total_size() const;

 private:
  std::vector<ParamRecord> records_;
  std::unordered_map<std::string, int> by_name_;
};

// Parameter layout for a config (all zeros), and the default initialization:
// embeddings/tokens/affine weights ~ N(0, 0.02^2), biases zero, norm gains 1.
ParamStore param_layout(const ModelConfig& cfg);
ParamStore init_params(const ModelConfig& cfg, Rng& rng);

// ----------------------------------------------------- tape-bound views ----

struct BlockView {
  Tensor norm1_gain, norm1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor norm2_gain, norm2_bias;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct EncoderView {
  Tensor cls_token;    // (D)
  Tensor patch_proj;   // (D x P^2C)
  Tensor patch_bias;   // (D x N), per patch position
  Tensor pos_embed;    // (N+1 x D)
  std::vector<BlockView> blocks;
  Tensor final_gain, final_bias;
  Tensor out_proj;     // (D' x D)
  Tensor out_bias;     // (D' x N+1), per sequence position
  Tensor mask_token;   // (D')
};

struct ReparamView {
  Tensor mean_w, mean_bias;      // (D' x 2D'), (D' x N+1)
  Tensor logstd_w, logstd_bias;  // same shapes; affine output is log-std
};

struct DecoderView {
  Tensor in_proj;   // (D' x 2D')
  Tensor in_bias;   // (D' x N+1)
  Tensor pos_embed; // (N+1 x D')
  std::vector<BlockView> blocks;
  Tensor final_gain, final_bias;
  Tensor head_w;    // (D' x P^2C)
  Tensor head_bias; // (P^2C x N+1)
};

struct ModelView {
  EncoderView enc;
  ReparamView rp;
  DecoderView dec;
  std::vector<Tensor> leaves;  // every parameter tensor, in ParamStore order
};

// Binds the store onto a tape (training) or as constants (inference).
ModelView bind_params(Tape& tape, const ParamStore& store, const ModelConfig& cfg);
ModelView bind_constants(const ParamStore& store, const ModelConfig& cfg);

// ----------------------------------------------------------- attention ----

struct AttentionStats {
  int standard_calls = 0;
  int chunked_calls = 0;
};

// q, k, v are (heads x n x head_dim); output matches. `standard`
// materializes the n x n weights; `chunked` streams query blocks with a
// running max/denominator and never materializes them.
Tensor attention_standard(const Tensor& q, const Tensor& k, const Tensor& v);
Tensor attention_chunked(const Tensor& q, const Tensor& k, const Tensor& v, int chunk_size);
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const ModelConfig& cfg,
                 AttentionStats* stats = nullptr);

// (n x h*dh) <-> (h x n x dh)
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);

// --------------------------------------------------------------- model ----

// Encodes the kept patch rows (ascending indices) with the shared-weight
// encoder; row 0 of the result is the class token.
Tensor siamvit_encode(const Tensor& patches, const std::vector<int>& keep,
                      const EncoderView& enc, const ModelConfig& cfg,
                      AttentionStats* stats = nullptr);

// Column-concatenates the full-frame encoding with the masked-frame
// encoding re-scattered to full length, mask token at masked positions.
Tensor assemble_latent_input(const Tensor& u1, const Tensor& u2, const MaskSet& mask,
                             const Tensor& mask_token);

struct Latent {
  Tensor z;       // sampled latent
  Tensor mean;    // (N+1 x D')
  Tensor stddev;  // exp(log-std); all-ones when the layer is disabled
};
Latent reparameterize(const Tensor& u, const ReparamView& rp, const Tensor& noise, bool enabled);

Tensor decode(const Tensor& z, const Tensor& u1, const DecoderView& dec, const ModelConfig& cfg,
              AttentionStats* stats = nullptr);

struct ForwardOut {
  Tensor patches;  // composed output rows (N x P^2C)
  Tensor mean;
  Tensor stddev;
};

// Full forward pass: frame1 conditions, frame2 is restored at the masked
// patches. Frames are (H x W x C) in model scale; noise is (N+1 x D') or an
// undefined tensor for deterministic inference.
ForwardOut model_forward(const Tensor& frame1, const Tensor& frame2, const MaskSet& mask,
                         const ModelView& view, const ModelConfig& cfg, const Tensor& noise,
                         AttentionStats* stats = nullptr);

Tensor gaussian_noise(Shape shape, Rng& rng);

}  // namespace siammcvae
