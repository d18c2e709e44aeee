#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mvh/mixers.hpp"

namespace mvh::backbone {

using nn::Mat;
using nn::Tensor3;

enum class Variant { ViM_EinFFT, Hydra_EinFFT, ViT12, ViT24, Hydra_Hybrid, MV_Hybrid };
enum class Scale { Toy, Small };
enum class SeqKind { MV, ViM, Hydra, Attention };
enum class ChanKind { EinFFT, MLP };

inline constexpr Variant kAllVariants[] = {Variant::ViM_EinFFT, Variant::Hydra_EinFFT, Variant::ViT12,
                                           Variant::ViT24,      Variant::Hydra_Hybrid, Variant::MV_Hybrid};

const char* to_string(Variant v);
const char* to_string(Scale s);
const char* to_string(SeqKind k);
const char* to_string(ChanKind k);
Variant parse_variant(std::string_view name);
Scale parse_scale(std::string_view name);

struct BlockSpec {
  SeqKind seq;
  ChanKind chan;
  bool operator==(const BlockSpec&) const = default;
};

struct BackboneConfig {
  int image_size = 64;
  int patch_size = 16;
  int in_channels = 3;
  int channels = 64;
  int depth = 0;
  std::vector<BlockSpec> layout;
  double norm_eps = 1e-6;
  int state_dim = 4;
  int rank = 16;
  int heads = 4;
  int fft_blocks = 4;

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  int patch_dim() const { return in_channels * patch_size * patch_size; }
  /// Throws InvalidArgument when the fields are inconsistent.
  void validate() const;
};

BackboneConfig make_variant(Variant v, Scale s);
bool has_ssm(const BackboneConfig& cfg);

struct Block {
  nn::LayerNormWeights norm1;
  mix::SequenceMixer seq;
  nn::LayerNormWeights norm2;
  mix::ChannelMixer chan;

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& b, F& f) {
    auto prefixed = [&](const char* p) {
      return [&f, p](std::string_view n, auto& m) { f(std::string(p).append(n), m); };
    };
    b.norm1.visit(prefixed("norm1."));
    std::visit([&](auto& m) { m.visit(prefixed("seq.")); }, b.seq);
    b.norm2.visit(prefixed("norm2."));
    std::visit([&](auto& m) { m.visit(prefixed("chan.")); }, b.chan);
  }
};

struct Weights {
  Mat patch_w;  // C x patch_dim
  Mat patch_b;  // 1 x C
  Mat pos;      // tokens x C
  std::vector<Block> blocks;
  nn::LayerNormWeights final_norm;

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& w, F& f) {
    f(std::string("patch.w"), w.patch_w);
    f(std::string("patch.b"), w.patch_b);
    f(std::string("pos"), w.pos);
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
      const std::string p = "blocks." + std::to_string(i) + ".";
      w.blocks[i].visit([&](std::string_view n, auto& m) { f(p + std::string(n), m); });
    }
    w.final_norm.visit([&](std::string_view n, auto& m) { f("final_norm." + std::string(n), m); });
  }
};

Weights init_weights(const BackboneConfig& cfg, std::uint64_t seed);
/// Parameter count computed from the config alone (no allocation).
std::size_t parameter_count(const BackboneConfig& cfg);

/// Images in NCHW order: index ((b * in_channels + c) * H + y) * W + x.
struct ImageBatch {
  int batch = 0;
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  ImageBatch() = default;
  ImageBatch(int b, int c, int h, int w)
      : batch(b), channels(c), height(h), width(w), data(static_cast<std::size_t>(b) * c * h * w, 0.0) {}
  double& at(int b, int c, int y, int x) { return data[((static_cast<std::size_t>(b) * channels + c) * height + y) * width + x]; }
  double at(int b, int c, int y, int x) const {
    return data[((static_cast<std::size_t>(b) * channels + c) * height + y) * width + x];
  }
};

/// Flattened patches of one image: tokens x patch_dim, token order row-major
/// over the grid, patch vector ordered (channel, row, column).
Mat unfold_patches(const BackboneConfig& cfg, const ImageBatch& images, int b);

Tensor3 patch_embed(const BackboneConfig& cfg, const Weights& w, const ImageBatch& images);

struct Output {
  Tensor3 tokens;  // after the final norm
  Mat embedding;   // batch x channels, mean over tokens
};

Output forward(const BackboneConfig& cfg, const Weights& w, const ImageBatch& images);

/// Gradient of <d_embedding, embedding> with respect to every weight.
Weights backward(const BackboneConfig& cfg, const Weights& w, const ImageBatch& images, const Mat& d_embedding);

struct EigenReport {
  double min = 0.0;
  double max = 0.0;
  std::vector<double> edges;        // bins + 1
  std::vector<std::size_t> counts;  // bins
  std::vector<double> values;       // every realized eigenvalue, in parameter order
};

EigenReport eigen_report(const Weights& w, int bins = 10);

}  // namespace mvh::backbone
