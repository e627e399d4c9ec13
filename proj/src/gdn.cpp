#include "sketchmotion/gdn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "sketchmotion/error.hpp"
#include "sketchmotion/raster.hpp"

namespace sketchmotion::gdn {

using ad::Tensor;

void GdnConfig::validate() const {
  if (d == 0 || heads == 0 || d % (2 * heads) != 0)
    throw ValidationError("gdn.d must be a positive multiple of 2 * heads", "/gdn/d");
  if (layers == 0) throw ValidationError("gdn.layers must be at least 1", "/gdn/layers");
  if (pe_bands == 0) throw ValidationError("gdn.pe_bands must be at least 1", "/gdn/pe_bands");
  if (patch_grid == 0) throw ValidationError("gdn.patch_grid must be at least 1", "/gdn/patch_grid");
  const std::pair<double, const char*> lambdas[] = {{lambda_t, "/gdn/lambda_t"},
                                                    {lambda_r, "/gdn/lambda_r"},
                                                    {lambda_s, "/gdn/lambda_s"},
                                                    {lambda_sh, "/gdn/lambda_sh"}};
  for (const auto& [v, field] : lambdas)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("lambda must be >= 0", field);
}

const char* to_string(ParamRole role) {
  switch (role) {
    case ParamRole::shared: return "shared";
    case ParamRole::local: return "local";
    case ParamRole::global: return "global";
  }
  return "?";
}

std::vector<double> temporal_encoding(double k, std::size_t d) {
  std::vector<double> tau(d);
  for (std::size_t j = 0; 2 * j < d; ++j) {
    const double angle = k / std::pow(10000.0, static_cast<double>(2 * j) / static_cast<double>(d));
    tau[2 * j] = std::sin(angle);
    if (2 * j + 1 < d) tau[2 * j + 1] = std::cos(angle);
  }
  return tau;
}

GroupInput make_group_input(const motion::GroupTensor& group, double canvas_w, double canvas_h,
                            Tensor context) {
  GroupInput in;
  in.points = group.point_count();
  in.frames = group.frame_count;
  in.coords.resize(group.points.size());
  for (std::size_t i = 0; i < group.points.size(); i += 2) {
    in.coords[i] = 2.0 * group.points[i] / canvas_w - 1.0;
    in.coords[i + 1] = 2.0 * group.points[i + 1] / canvas_h - 1.0;
  }
  in.centroids.assign(in.frames * 2, 0.0);
  for (std::size_t n = 0; n < in.points; ++n)
    for (std::size_t k = 0; k < in.frames; ++k) {
      in.centroids[k * 2] += in.coords[(n * in.frames + k) * 2];
      in.centroids[k * 2 + 1] += in.coords[(n * in.frames + k) * 2 + 1];
    }
  for (auto& c : in.centroids) c /= static_cast<double>(std::max<std::size_t>(in.points, 1));
  in.context = std::move(context);
  return in;
}

Tensor context_features(const FrameSequence& coarse, std::size_t grid, std::size_t raster_h,
                        std::size_t raster_w) {
  raster::RasterConfig cfg;
  cfg.height = raster_h;
  cfg.width = raster_w;
  const auto frames = raster::rasterize_sequence(coarse, cfg);
  std::vector<double> values;
  values.reserve(frames.size() * grid * grid * 3);
  for (const auto& f : frames) {
    const auto feats = raster::patch_features(f, grid);
    values.insert(values.end(), feats.begin(), feats.end());
  }
  return Tensor::from({frames.size(), grid * grid, 3}, std::move(values));
}

Tensor affine_displacement(const std::vector<double>& coords, const std::vector<double>& centroids,
                           std::size_t points, std::size_t frames, const AffineParams& p) {
  std::vector<double> qx(points * frames), qy(points * frames);
  for (std::size_t n = 0; n < points; ++n)
    for (std::size_t k = 0; k < frames; ++k) {
      const auto i = n * frames + k;
      qx[i] = coords[i * 2] - centroids[k * 2];
      qy[i] = coords[i * 2 + 1] - centroids[k * 2 + 1];
    }
  const Tensor x = Tensor::from({points, frames}, std::move(qx));
  const Tensor y = Tensor::from({points, frames}, std::move(qy));
  // Scale, then x-shear, then rotate, then translate.
  const Tensor sy_y = p.sy * y;
  const Tensor a = p.sx * x + p.shear * sy_y;
  const Tensor c = ad::cos(p.theta);
  const Tensor s = ad::sin(p.theta);
  const Tensor rx = c * a - s * sy_y;
  const Tensor ry = s * a + c * sy_y;
  const Tensor dx = (rx + p.tx) - x;
  const Tensor dy = (ry + p.ty) - y;
  return ad::concat({ad::reshape(dx, {points, frames, 1}), ad::reshape(dy, {points, frames, 1})}, 2);
}

// ---------------------------------------------------------------------------

struct GroupNetwork::Init {
  GroupNetwork& net;
  std::mt19937_64 rng;

  Tensor param(const std::string& name, ParamRole role, ad::Shape shape, std::vector<double> v) {
    auto t = Tensor::from(std::move(shape), std::move(v), true);
    net.params_.push_back({name, role, t});
    return t;
  }

  Linear linear(const std::string& name, ParamRole role, std::size_t in, std::size_t out,
                bool zero = false) {
    std::vector<double> w(in * out, 0.0);
    if (!zero) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& x : w) x = u(rng);
    }
    Linear l;
    l.w = param(name + ".w", role, {in, out}, std::move(w));
    l.b = param(name + ".b", role, {1, out}, std::vector<double>(out, 0.0));
    return l;
  }

  Norm norm(const std::string& name, std::size_t d) {
    Norm n;
    n.gain = param(name + ".gain", ParamRole::shared, {1, d}, std::vector<double>(d, 1.0));
    n.bias = param(name + ".bias", ParamRole::shared, {1, d}, std::vector<double>(d, 0.0));
    return n;
  }

  Attention attention(const std::string& name, std::size_t d) {
    Attention a;
    a.q = linear(name + ".q", ParamRole::shared, d, d);
    a.k = linear(name + ".k", ParamRole::shared, d, d);
    a.v = linear(name + ".v", ParamRole::shared, d, d);
    a.o = linear(name + ".o", ParamRole::shared, d, d);
    return a;
  }
};

GroupNetwork::GroupNetwork(const GdnConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const auto d = cfg_.d;
  Init init{*this, std::mt19937_64(seed)};
  embed1_ = init.linear("embed.0", ParamRole::shared, 2, d);
  embed2_ = init.linear("embed.1", ParamRole::shared, d, d);
  spatial_ = init.linear("fpe.spatial", ParamRole::shared, 4 * cfg_.pe_bands, d);
  ctx_proj_ = init.linear("context.proj", ParamRole::shared, 3, d);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const auto pre = "blocks." + std::to_string(l);
    Block b;
    b.ctx_norm = init.norm(pre + ".ctx_norm", d);
    b.temporal = init.attention(pre + ".temporal", d);
    b.query_norm = init.norm(pre + ".query_norm", d);
    b.key_norm = init.norm(pre + ".key_norm", d);
    b.cross = init.attention(pre + ".cross", d);
    b.ffn_norm = init.norm(pre + ".ffn_norm", d);
    b.ffn_in = init.linear(pre + ".ffn.0", ParamRole::shared, d, 2 * d);
    b.ffn_out = init.linear(pre + ".ffn.1", ParamRole::shared, 2 * d, d);
    blocks_.push_back(std::move(b));
  }
  local1_ = init.linear("local.0", ParamRole::local, d, d);
  local2_ = init.linear("local.1", ParamRole::local, d, 2, true);
  global1_ = init.linear("global.0", ParamRole::global, d, d);
  global2_ = init.linear("global.1", ParamRole::global, d, 6, true);
}

std::vector<Parameter> GroupNetwork::parameters() const { return params_; }

Tensor GroupNetwork::apply(const Linear& l, const Tensor& x) const {
  const auto in = l.w.dim(0), out = l.w.dim(1);
  if (x.shape().back() != in) throw ShapeError("linear layer input width mismatch");
  auto shape = x.shape();
  const auto rows = x.numel() / in;
  auto y = ad::add(ad::matmul(ad::reshape(x, {rows, in}), l.w), l.b);
  shape.back() = out;
  return ad::reshape(y, shape);
}

Tensor GroupNetwork::apply(const Norm& n, const Tensor& x) const {
  const auto d = x.shape().back();
  const auto rows = x.numel() / d;
  auto y = ad::add(ad::mul(ad::layer_norm(ad::reshape(x, {rows, d})), n.gain), n.bias);
  return ad::reshape(y, x.shape());
}

Tensor GroupNetwork::attend(const Attention& a, const Tensor& q_in, const Tensor& kv_in,
                            std::vector<Tensor>* probs) const {
  const auto B = q_in.dim(0), Lq = q_in.dim(1), Lk = kv_in.dim(1);
  const auto d = cfg_.d, h = cfg_.heads, dh = d / h;
  auto heads = [&](const Tensor& t, std::size_t L) {
    return ad::reshape(ad::permute(ad::reshape(t, {B, L, h, dh}), {0, 2, 1, 3}), {B * h, L, dh});
  };
  const Tensor q = heads(apply(a.q, q_in), Lq);
  const Tensor k = heads(apply(a.k, kv_in), Lk);
  const Tensor v = heads(apply(a.v, kv_in), Lk);
  const Tensor scores = ad::mul(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(double(dh)));
  const Tensor p = ad::softmax(scores, 2);
  if (probs) probs->push_back(p);
  const Tensor o = ad::matmul(p, v);
  const Tensor merged =
      ad::reshape(ad::permute(ad::reshape(o, {B, h, Lq, dh}), {0, 2, 1, 3}), {B, Lq, d});
  return apply(a.o, merged);
}

Tensor GroupNetwork::embed(const Tensor& coords) const {
  if (coords.rank() != 3 || coords.dim(2) != 2) throw ShapeError("embed expects (N, K, 2)");
  return apply(embed2_, ad::leaky_relu(apply(embed1_, coords)));
}

Tensor GroupNetwork::fpe(const Tensor& f_pos, const GroupInput& in) const {
  const auto N = in.points, K = in.frames, L = cfg_.pe_bands, d = cfg_.d;
  if (f_pos.rank() != 3 || f_pos.dim(0) != N || f_pos.dim(1) != K || f_pos.dim(2) != d)
    throw ShapeError("fpe: feature shape does not match the group input");
  std::vector<double> feats(N * K * 4 * L);
  for (std::size_t i = 0; i < N * K; ++i) {
    const double x = in.coords[i * 2], y = in.coords[i * 2 + 1];
    for (std::size_t l = 0; l < L; ++l) {
      const double f = std::ldexp(std::numbers::pi, static_cast<int>(l));
      double* out = &feats[i * 4 * L + l * 4];
      out[0] = std::sin(f * x);
      out[1] = std::cos(f * x);
      out[2] = std::sin(f * y);
      out[3] = std::cos(f * y);
    }
  }
  const Tensor spatial = apply(spatial_, Tensor::from({N, K, 4 * L}, std::move(feats)));
  std::vector<double> tau;
  tau.reserve(K * d);
  for (std::size_t k = 1; k <= K; ++k) {
    const auto t = temporal_encoding(static_cast<double>(k), d);
    tau.insert(tau.end(), t.begin(), t.end());
  }
  return ad::add(ad::add(f_pos, spatial), Tensor::from({1, K, d}, std::move(tau)));
}

Tensor GroupNetwork::motion_context(const Tensor& f_enc, const Tensor& context,
                                    std::vector<Tensor>* attention) const {
  const auto d = cfg_.d;
  if (context.rank() != 3 || context.dim(2) != 3)
    throw ShapeError("context features must be (K, patches, 3)");
  const auto K = context.dim(0);
  if (f_enc.rank() != 3 || f_enc.dim(1) != K)
    throw ShapeError("context has " + std::to_string(K) + " frames but features have " +
                     std::to_string(f_enc.rank() == 3 ? f_enc.dim(1) : 0));
  std::vector<double> tau;
  tau.reserve(K * d);
  for (std::size_t k = 1; k <= K; ++k) {
    const auto t = temporal_encoding(static_cast<double>(k), d);
    tau.insert(tau.end(), t.begin(), t.end());
  }
  // Context stream kept as (P, K, d) so temporal attention batches over patches.
  Tensor ctx = ad::add(apply(ctx_proj_, context), Tensor::from({K, 1, d}, std::move(tau)));
  ctx = ad::permute(ctx, {1, 0, 2});
  Tensor x = f_enc;
  for (const auto& b : blocks_) {
    const Tensor cn = apply(b.ctx_norm, ctx);
    ctx = ad::add(ctx, attend(b.temporal, cn, cn, attention));
    const Tensor q = apply(b.query_norm, ad::permute(x, {1, 0, 2}));      // (K, N, d)
    const Tensor kv = apply(b.key_norm, ad::permute(ctx, {1, 0, 2}));     // (K, P, d)
    x = ad::add(x, ad::permute(attend(b.cross, q, kv, attention), {1, 0, 2}));
    const Tensor hidden = ad::leaky_relu(apply(b.ffn_in, apply(b.ffn_norm, x)));
    x = ad::add(x, apply(b.ffn_out, hidden));
  }
  return x;
}

Tensor GroupNetwork::local_path(const Tensor& f_fused) const {
  return apply(local2_, ad::leaky_relu(apply(local1_, f_fused)));
}

Tensor GroupNetwork::global_head(const Tensor& f_fused) const {
  const auto K = f_fused.dim(1), d = cfg_.d;
  const Tensor pooled = ad::reshape(ad::mean(f_fused, 0), {K, d});
  return apply(global2_, ad::leaky_relu(apply(global1_, pooled)));
}

AffineParams GroupNetwork::modulate(const Tensor& raw) const {
  const auto K = raw.dim(0);
  auto column = [&](std::size_t i) { return ad::reshape(ad::slice(raw, 1, i, i + 1), {1, K}); };
  AffineParams p;
  p.raw = raw;
  p.sx = ad::add(ad::mul(column(0), cfg_.lambda_s), 1.0);
  p.sy = ad::add(ad::mul(column(1), cfg_.lambda_s), 1.0);
  p.shear = ad::mul(column(2), cfg_.lambda_sh);
  p.theta = ad::mul(column(3), cfg_.lambda_r);
  p.tx = ad::mul(column(4), cfg_.lambda_t);
  p.ty = ad::mul(column(5), cfg_.lambda_t);
  return p;
}

DisplacementField GroupNetwork::predict(const GroupInput& in) const {
  const Tensor coords = Tensor::from({in.points, in.frames, 2}, in.coords);
  const Tensor fused = motion_context(fpe(embed(coords), in), in.context);
  DisplacementField field;
  field.local = local_path(fused);
  field.affine = modulate(global_head(fused));
  field.global = affine_displacement(in.coords, in.centroids, in.points, in.frames, field.affine);
  return field;
}

Tensor refine_group(const motion::GroupTensor& coarse, const Tensor& delta, double canvas_w,
                    double canvas_h) {
  const auto N = coarse.point_count(), K = coarse.frame_count;
  if (delta.shape() != ad::Shape{N, K, 2}) throw ShapeError("displacement shape mismatch");
  const Tensor base = Tensor::from({N, K, 2}, coarse.points);
  const Tensor scale = Tensor::from({1, 1, 2}, {canvas_w / 2.0, canvas_h / 2.0});
  return ad::add(base, ad::mul(delta, scale));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', 'K'};

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::io, "checkpoint is truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (ad::numel(t.shape) != t.values.size())
      throw ShapeError("checkpoint tensor " + t.name + " has inconsistent shape");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto dim : t.shape) put_le<std::uint64_t>(out, dim);
    for (double v : t.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::io, "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));
  if (r.bytes(4) != std::string(kMagic, 4)) throw Error(ErrorCode::io, "not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::version, "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t a = 0; a < rank; ++a) t.shape.push_back(r.get<std::uint64_t>());
    t.values.resize(ad::numel(t.shape));
    for (auto& v : t.values) v = std::bit_cast<double>(r.get<std::uint64_t>());
    out.push_back(std::move(t));
  }
  if (!r.done()) throw Error(ErrorCode::io, "trailing bytes in checkpoint");
  return out;
}

std::vector<NamedTensor> snapshot(const std::vector<Parameter>& params, const std::string& prefix) {
  std::vector<NamedTensor> out;
  for (const auto& p : params)
    out.push_back({prefix + p.name, p.tensor.shape(),
                   std::vector<double>(p.tensor.values().begin(), p.tensor.values().end())});
  return out;
}

void restore(const std::vector<Parameter>& params, const std::vector<NamedTensor>& tensors,
             const std::string& prefix) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (const auto& p : params) {
    const auto it = by_name.find(prefix + p.name);
    if (it == by_name.end()) throw Error(ErrorCode::not_found, "checkpoint lacks " + prefix + p.name);
    if (it->second->shape != p.tensor.shape())
      throw ShapeError("checkpoint shape mismatch for " + prefix + p.name);
    auto t = p.tensor;
    std::copy(it->second->values.begin(), it->second->values.end(), t.data().begin());
  }
}

}  // namespace sketchmotion::gdn
