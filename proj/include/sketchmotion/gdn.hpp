#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sketchmotion/autodiff.hpp"
#include "sketchmotion/motion_init.hpp"

namespace sketchmotion::gdn {

struct GdnConfig {
  std::size_t d = 128;
  std::size_t layers = 6;
  std::size_t heads = 4;
  std::size_t pe_bands = 8;
  std::size_t patch_grid = 16;
  double lambda_t = 1e-2;
  double lambda_r = 1e-2;
  double lambda_s = 5e-2;
  double lambda_sh = 1e-1;

  void validate() const;
};

/// Which optimizer phase updates a parameter.
enum class ParamRole { shared, local, global };
const char* to_string(ParamRole role);

struct Parameter {
  std::string name;
  ParamRole role;
  ad::Tensor tensor;
};

/// Per-frame transform parameters. `raw` is (K, 6) in the order
/// (sx, sy, shear, theta, tx, ty); the others are modulated and shaped (1, K).
struct AffineParams {
  ad::Tensor raw;
  ad::Tensor sx, sy, shear, theta, tx, ty;
};

/// Displacements in normalized coordinates, each (N_i, K, 2).
struct DisplacementField {
  ad::Tensor local;
  ad::Tensor global;
  AffineParams affine;

  ad::Tensor total() const { return ad::add(local, global); }
};

/// Network inputs for one group: coarse points normalized to [-1, 1] plus the
/// frozen context features of the merged coarse animation.
struct GroupInput {
  std::size_t points = 0;
  std::size_t frames = 0;
  std::vector<double> coords;     // N x K x 2
  std::vector<double> centroids;  // K x 2, per-frame mean of coords
  ad::Tensor context;             // (K, g*g, 3), no gradient
};

GroupInput make_group_input(const motion::GroupTensor& group, double canvas_w, double canvas_h,
                            ad::Tensor context);

/// Patch features of every frame stacked as (K, g*g, 3).
ad::Tensor context_features(const FrameSequence& coarse, std::size_t grid,
                            std::size_t raster_h, std::size_t raster_w);

/// tau(k)[2j] = sin(k / 10000^(2j/d)), tau(k)[2j+1] = cos(same).
std::vector<double> temporal_encoding(double k, std::size_t d);

/// T = Translate . Rotate . Shear_x . Scale about each frame's centroid;
/// returns T(p) - p for coords (N, K, 2).
ad::Tensor affine_displacement(const std::vector<double>& coords,
                               const std::vector<double>& centroids, std::size_t points,
                               std::size_t frames, const AffineParams& params);

/// One group's independent subnetwork.
class GroupNetwork {
 public:
  GroupNetwork(const GdnConfig& cfg, std::uint64_t seed);

  const GdnConfig& config() const { return cfg_; }
  std::vector<Parameter> parameters() const;

  /// (N, K, 2) -> (N, K, d)
  ad::Tensor embed(const ad::Tensor& coords) const;
  /// F_pos + spatial(coords) + tau(k)
  ad::Tensor fpe(const ad::Tensor& f_pos, const GroupInput& in) const;
  /// Temporal self-attention on context, per-frame cross-attention, feedforward.
  /// Attention probability tensors are appended to `attention` when given.
  ad::Tensor motion_context(const ad::Tensor& f_enc, const ad::Tensor& context,
                            std::vector<ad::Tensor>* attention = nullptr) const;
  ad::Tensor local_path(const ad::Tensor& f_fused) const;
  /// Returns the raw (K, 6) head output.
  ad::Tensor global_head(const ad::Tensor& f_fused) const;
  AffineParams modulate(const ad::Tensor& raw) const;

  DisplacementField predict(const GroupInput& in) const;

 private:
  struct Linear {
    ad::Tensor w, b;  // (in, out), (1, out)
  };
  struct Norm {
    ad::Tensor gain, bias;  // (1, d)
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct Block {
    Norm ctx_norm;
    Attention temporal;
    Norm query_norm, key_norm;
    Attention cross;
    Norm ffn_norm;
    Linear ffn_in, ffn_out;
  };

  struct Init;
  ad::Tensor apply(const Linear& l, const ad::Tensor& x) const;
  ad::Tensor apply(const Norm& n, const ad::Tensor& x) const;
  ad::Tensor attend(const Attention& a, const ad::Tensor& q_in, const ad::Tensor& kv_in,
                    std::vector<ad::Tensor>* probs) const;

  GdnConfig cfg_;

  Linear embed1_, embed2_;
  Linear spatial_;
  Linear ctx_proj_;
  std::vector<Block> blocks_;
  Linear local1_, local2_;
  Linear global1_, global2_;
  std::vector<Parameter> params_;
};

/// Maps a normalized displacement back to canvas units and adds it to the
/// coarse group: result (N, K, 2) = coarse + delta * (w/2, h/2).
ad::Tensor refine_group(const motion::GroupTensor& coarse, const ad::Tensor& delta,
                        double canvas_w, double canvas_h);

// --- checkpoints ---
struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: "SMCK", u32 version, u32 count, then per tensor u32 name
/// length, name bytes, u32 rank, u64 dims, little-endian f64 values.
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot(const std::vector<Parameter>& params,
                                  const std::string& prefix = {});
/// Copies values by name; every parameter must be present with a matching shape.
void restore(const std::vector<Parameter>& params, const std::vector<NamedTensor>& tensors,
             const std::string& prefix = {});

}  // namespace sketchmotion::gdn
