#include <bit>
#include <cstring>
#include <fstream>

#include "siammcvae/train.hpp"

namespace siammcvae {

namespace {

// little-endian primitives
void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<unsigned char>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  put_u64(out, std::bit_cast<uint64_t>(v));
}

void put_str(std::vector<unsigned char>& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const std::vector<unsigned char>& bytes;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("checkpoint: " + msg + " at byte " + std::to_string(pos));
  }
  void need(size_t n) const {
    if (bytes.size() - pos < n) fail("truncated (need " + std::to_string(n) + " bytes)");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + n));
    pos += n;
    return s;
  }
  unsigned char byte() {
    need(1);
    return bytes[pos++];
  }
};

constexpr unsigned char kMagic[4] = {'S', 'M', 'C', 'V'};
constexpr uint32_t kVersion = 1;

void put_values(std::vector<unsigned char>& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  for (double x : v) put_f64(out, x);
}

std::vector<double> get_values(Reader& r) {
  uint64_t n = r.u64();
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = r.f64();
  return v;
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, ckpt.version);
  put_str(out, ckpt.config_text);
  put_u64(out, ckpt.step);
  put_u64(out, ckpt.rng.s);
  out.push_back(ckpt.rng.has_spare ? 1 : 0);
  put_f64(out, ckpt.rng.spare);

  put_u32(out, static_cast<uint32_t>(ckpt.params.count()));
  for (int i = 0; i < ckpt.params.count(); ++i) {
    const ParamRecord& rec = ckpt.params.record(i);
    put_str(out, rec.name);
    put_u32(out, static_cast<uint32_t>(rec.shape.size()));
    for (int d : rec.shape) put_u64(out, static_cast<uint64_t>(d));
    put_values(out, rec.values);
  }

  out.push_back(ckpt.has_opt ? 1 : 0);
  if (ckpt.has_opt) {
    put_u64(out, ckpt.opt.t);
    for (const auto& m : ckpt.opt.m) put_values(out, m);
    for (const auto& v : ckpt.opt.v) put_values(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) r.fail("bad magic");
  r.pos = 4;
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kVersion)
    r.fail("unsupported version " + std::to_string(ckpt.version));
  ckpt.config_text = r.str();
  ckpt.step = r.u64();
  ckpt.rng.s = r.u64();
  ckpt.rng.has_spare = r.byte() != 0;
  ckpt.rng.spare = r.f64();

  uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    uint32_t ndim = r.u32();
    Shape shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(r.u64()));
    std::vector<double> values = get_values(r);
    if (static_cast<int64_t>(values.size()) != shape_size(shape))
      r.fail("value count does not match shape for " + name);
    int idx = ckpt.params.add(name, shape);
    ckpt.params.record(idx).values = std::move(values);
  }

  ckpt.has_opt = r.byte() != 0;
  if (ckpt.has_opt) {
    ckpt.opt.t = r.u64();
    ckpt.opt.m.resize(static_cast<size_t>(count));
    ckpt.opt.v.resize(static_cast<size_t>(count));
    for (uint32_t i = 0; i < count; ++i) {
      ckpt.opt.m[i] = get_values(r);
      if (ckpt.opt.m[i].size() != ckpt.params.record(static_cast<int>(i)).values.size())
        r.fail("optimizer moment size mismatch");
    }
    for (uint32_t i = 0; i < count; ++i) {
      ckpt.opt.v[i] = get_values(r);
      if (ckpt.opt.v[i].size() != ckpt.params.record(static_cast<int>(i)).values.size())
        r.fail("optimizer moment size mismatch");
    }
  }
  if (r.pos != bytes.size()) r.fail("trailing bytes");

  // shape table must agree with the embedded config
  TrainConfig cfg = train_config_from_map(ConfigMap::parse(ckpt.config_text));
  ParamStore layout = param_layout(cfg.model);
  if (layout.count() != ckpt.params.count())
    throw ParseError("checkpoint: parameter count does not match its config");
  for (int i = 0; i < layout.count(); ++i) {
    const ParamRecord& want = layout.record(i);
    const ParamRecord& got = ckpt.params.record(i);
    if (want.name != got.name || want.shape != got.shape)
      throw ParseError("checkpoint: parameter '" + got.name + "' does not match the config (" +
                       shape_str(got.shape) + " vs " + shape_str(want.shape) + ")");
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<unsigned char> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("checkpoint: cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace siammcvae
