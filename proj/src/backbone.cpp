#include "mvh/backbone.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <string>

#include "mvh/error.hpp"

namespace mvh::backbone {

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view name, const E (&all)[N], const char* what) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  for (E e : all)
    if (lower(name) == lower(to_string(e))) return e;
  throw Error(ErrorKind::InvalidArgument, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

std::size_t branch_params(std::size_t E, std::size_t N, std::size_t r, std::size_t pairs) {
  return 3 * E + E + (r + 2 * pairs * N) * E + E * r + E + E * N + E;
}

std::size_t seq_params(const BackboneConfig& cfg, SeqKind k) {
  const std::size_t C = cfg.channels, N = cfg.state_dim, r = cfg.rank;
  switch (k) {
    case SeqKind::MV:
      return 2 * C * C + branch_params(C, N, r, 1) + 4 * C + C * 2 * C;
    case SeqKind::ViM:
      return 4 * C * C + 2 * branch_params(2 * C, N, r, 1) + C * 2 * C;
    case SeqKind::Hydra:
      return 4 * C * C + branch_params(2 * C, N, r, 2) + C * 2 * C;
    case SeqKind::Attention:
      return 4 * C * C;
  }
  return 0;
}

std::size_t chan_params(const BackboneConfig& cfg, ChanKind k) {
  const std::size_t C = cfg.channels;
  return k == ChanKind::EinFFT ? 4 * C * (C / cfg.fft_blocks) + C : 8 * C * C;
}

void check_finite(const Mat& x, std::size_t block, const char* stage) {
  require(x.allFinite(), ErrorKind::NonFinite,
          std::string("non-finite activation after ") + stage + " of block " + std::to_string(block));
}

struct SampleCache {
  std::vector<Mat> x_in, x_mid;
  Mat x_final;
};

Mat run_sample(const Weights& w, Mat x, SampleCache* cache) {
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const Block& blk = w.blocks[i];
    if (cache) cache->x_in.push_back(x);
    const Mat n1 = nn::layer_norm(blk.norm1, x);
    x += std::visit([&](const auto& m) { return mix::forward_sample(m, n1); }, blk.seq);
    check_finite(x, i, "sequence mixing");
    if (cache) cache->x_mid.push_back(x);
    const Mat n2 = nn::layer_norm(blk.norm2, x);
    x += std::visit([&](const auto& m) { return mix::forward_sample(m, n2); }, blk.chan);
    check_finite(x, i, "channel mixing");
  }
  if (cache) cache->x_final = x;
  return nn::layer_norm(w.final_norm, x);
}

template <class V>
Mat mixer_backward(const V& mixer, V& grads, const Mat& x, const Mat& dy) {
  return std::visit(
      [&](const auto& m) {
        using W = std::decay_t<decltype(m)>;
        return mix::backward_sample(m, x, dy, std::get<W>(grads));
      },
      mixer);
}

void check_inputs(const BackboneConfig& cfg, const Weights& w, const ImageBatch& images) {
  cfg.validate();
  require(images.channels == cfg.in_channels && images.height == cfg.image_size && images.width == cfg.image_size,
          ErrorKind::ShapeMismatch,
          "expected " + std::to_string(cfg.in_channels) + "x" + std::to_string(cfg.image_size) + "x" +
              std::to_string(cfg.image_size) + " images, got " + std::to_string(images.channels) + "x" +
              std::to_string(images.height) + "x" + std::to_string(images.width));
  require(images.data.size() ==
              static_cast<std::size_t>(images.batch) * images.channels * images.height * images.width,
          ErrorKind::ShapeMismatch, "image buffer size does not match its shape");
  require(w.blocks.size() == cfg.layout.size(), ErrorKind::ShapeMismatch, "weights have the wrong block count");
  for (std::size_t i = 0; i < w.blocks.size(); ++i)
    require(w.blocks[i].seq.index() == static_cast<std::size_t>(cfg.layout[i].seq) &&
                w.blocks[i].chan.index() == static_cast<std::size_t>(cfg.layout[i].chan),
            ErrorKind::ShapeMismatch, "block " + std::to_string(i) + " mixer kinds differ from the layout");
  require(w.patch_w.rows() == cfg.channels && w.patch_w.cols() == cfg.patch_dim() && w.pos.rows() == cfg.tokens() &&
              w.pos.cols() == cfg.channels,
          ErrorKind::ShapeMismatch, "patch embedding weights inconsistent with config");
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::ViM_EinFFT: return "ViM_EinFFT";
    case Variant::Hydra_EinFFT: return "Hydra_EinFFT";
    case Variant::ViT12: return "ViT12";
    case Variant::ViT24: return "ViT24";
    case Variant::Hydra_Hybrid: return "Hydra_Hybrid";
    case Variant::MV_Hybrid: return "MV_Hybrid";
  }
  return "?";
}

const char* to_string(Scale s) { return s == Scale::Toy ? "toy" : "small"; }

const char* to_string(SeqKind k) {
  switch (k) {
    case SeqKind::MV: return "mv";
    case SeqKind::ViM: return "vim";
    case SeqKind::Hydra: return "hydra";
    case SeqKind::Attention: return "attention";
  }
  return "?";
}

const char* to_string(ChanKind k) { return k == ChanKind::EinFFT ? "einfft" : "mlp"; }

Variant parse_variant(std::string_view name) { return parse_enum(name, kAllVariants, "variant"); }

Scale parse_scale(std::string_view name) {
  static constexpr Scale all[] = {Scale::Toy, Scale::Small};
  return parse_enum(name, all, "scale");
}

void BackboneConfig::validate() const {
  require(patch_size > 0 && image_size > 0 && image_size % patch_size == 0, ErrorKind::InvalidArgument,
          "image_size must be a positive multiple of patch_size");
  require(channels > 0 && in_channels > 0, ErrorKind::InvalidArgument, "channel counts must be positive");
  require(depth == static_cast<int>(layout.size()), ErrorKind::InvalidArgument, "depth must equal layout length");
  require(heads > 0 && channels % heads == 0, ErrorKind::InvalidArgument, "heads must divide channels");
  require(fft_blocks > 0 && channels % fft_blocks == 0, ErrorKind::InvalidArgument, "fft_blocks must divide channels");
  require(state_dim > 0 && rank > 0 && norm_eps > 0.0, ErrorKind::InvalidArgument,
          "state_dim, rank and norm_eps must be positive");
}

BackboneConfig make_variant(Variant v, Scale s) {
  BackboneConfig cfg;
  const bool small = s == Scale::Small;
  cfg.channels = small ? 384 : 64;
  cfg.image_size = small ? 256 : 64;
  cfg.patch_size = 16;
  cfg.state_dim = small ? 16 : 4;
  cfg.rank = small ? (cfg.channels + 15) / 16 : cfg.channels / 4;
  cfg.heads = small ? 6 : 4;
  cfg.fft_blocks = 4;
  const int full = small ? 24 : 8;
  cfg.depth = v == Variant::ViT12 ? full / 2 : full;

  const BlockSpec vit{SeqKind::Attention, ChanKind::MLP};
  for (int i = 0; i < cfg.depth; ++i) {
    const bool first_half = i < cfg.depth / 2;
    switch (v) {
      case Variant::ViM_EinFFT: cfg.layout.push_back({SeqKind::ViM, ChanKind::EinFFT}); break;
      case Variant::Hydra_EinFFT: cfg.layout.push_back({SeqKind::Hydra, ChanKind::EinFFT}); break;
      case Variant::ViT12:
      case Variant::ViT24: cfg.layout.push_back(vit); break;
      case Variant::Hydra_Hybrid:
        cfg.layout.push_back(first_half ? BlockSpec{SeqKind::Hydra, ChanKind::EinFFT} : vit);
        break;
      case Variant::MV_Hybrid:
        cfg.layout.push_back(first_half ? BlockSpec{SeqKind::MV, ChanKind::EinFFT} : vit);
        break;
    }
  }
  return cfg;
}

bool has_ssm(const BackboneConfig& cfg) {
  return std::any_of(cfg.layout.begin(), cfg.layout.end(),
                     [](const BlockSpec& b) { return b.seq != SeqKind::Attention; });
}

Weights init_weights(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int C = cfg.channels;
  Rng rng = Rng::derive(seed, 0);
  Weights w;
  w.patch_w = nn::randn(rng, C, cfg.patch_dim(), 1.0 / std::sqrt(double(cfg.patch_dim())));
  w.patch_b = Mat::Zero(1, C);
  w.pos = nn::randn(rng, cfg.tokens(), C, 0.02);
  for (std::size_t i = 0; i < cfg.layout.size(); ++i) {
    Rng br = Rng::derive(seed, i + 1);
    Block b{nn::LayerNormWeights::identity(C, cfg.norm_eps), mix::AttentionWeights{},
            nn::LayerNormWeights::identity(C, cfg.norm_eps), mix::MLPWeights{}};
    switch (cfg.layout[i].seq) {
      case SeqKind::MV:
        b.seq = mix::MVWeights::init(br, C, cfg.state_dim, cfg.rank, spectral::InitScheme::Cascaded);
        break;
      case SeqKind::ViM:
        b.seq = mix::ViMWeights::init(br, C, cfg.state_dim, cfg.rank, spectral::InitScheme::Cascaded);
        break;
      case SeqKind::Hydra:
        b.seq = mix::HydraWeights::init(br, C, cfg.state_dim, cfg.rank, spectral::InitScheme::Uniform);
        break;
      case SeqKind::Attention: b.seq = mix::AttentionWeights::init(br, C, cfg.heads); break;
    }
    if (cfg.layout[i].chan == ChanKind::EinFFT)
      b.chan = mix::EinFFTWeights::init(br, C, cfg.fft_blocks);
    else
      b.chan = mix::MLPWeights::init(br, C);
    w.blocks.push_back(std::move(b));
  }
  w.final_norm = nn::LayerNormWeights::identity(C, cfg.norm_eps);
  return w;
}

std::size_t parameter_count(const BackboneConfig& cfg) {
  cfg.validate();
  const std::size_t C = cfg.channels;
  std::size_t n = C * cfg.patch_dim() + C + static_cast<std::size_t>(cfg.tokens()) * C + 2 * C;
  for (const auto& b : cfg.layout) n += 4 * C + seq_params(cfg, b.seq) + chan_params(cfg, b.chan);
  return n;
}

Mat unfold_patches(const BackboneConfig& cfg, const ImageBatch& images, int b) {
  const int g = cfg.grid(), p = cfg.patch_size;
  Mat patches(cfg.tokens(), cfg.patch_dim());
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx)
      for (int c = 0; c < cfg.in_channels; ++c)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx)
            patches(gy * g + gx, (c * p + dy) * p + dx) = images.at(b, c, gy * p + dy, gx * p + dx);
  return patches;
}

Tensor3 patch_embed(const BackboneConfig& cfg, const Weights& w, const ImageBatch& images) {
  check_inputs(cfg, w, images);
  Tensor3 out(images.batch, cfg.tokens(), cfg.channels);
  for (int b = 0; b < images.batch; ++b)
    out.sample(b) = nn::linear(unfold_patches(cfg, images, b), w.patch_w, w.patch_b) + w.pos;
  return out;
}

Output forward(const BackboneConfig& cfg, const Weights& w, const ImageBatch& images) {
  const Tensor3 x0 = patch_embed(cfg, w, images);
  Output out{Tensor3(images.batch, cfg.tokens(), cfg.channels), Mat(images.batch, cfg.channels)};
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (int b = 0; b < images.batch; ++b) {
    try {
      const Mat t = run_sample(w, Mat(x0.sample(b)), nullptr);
      out.tokens.sample(b) = t;
      out.embedding.row(b) = t.colwise().mean();
    } catch (...) {
#pragma omp critical(mvh_backbone_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

Weights backward(const BackboneConfig& cfg, const Weights& w, const ImageBatch& images, const Mat& d_embedding) {
  const Tensor3 x0 = patch_embed(cfg, w, images);
  require(d_embedding.rows() == images.batch && d_embedding.cols() == cfg.channels, ErrorKind::ShapeMismatch,
          "embedding cotangent must be batch x channels");
  Weights g = nn::zeros_like(w);
  const int T = cfg.tokens();
  for (int b = 0; b < images.batch; ++b) {
    SampleCache cache;
    run_sample(w, Mat(x0.sample(b)), &cache);
    Mat d_tokens = d_embedding.row(b).replicate(T, 1) / double(T);
    Mat dx = nn::layer_norm_backward(w.final_norm, cache.x_final, d_tokens, g.final_norm);
    for (std::size_t i = w.blocks.size(); i-- > 0;) {
      const Block& blk = w.blocks[i];
      Block& gb = g.blocks[i];
      const Mat n2 = nn::layer_norm(blk.norm2, cache.x_mid[i]);
      dx += nn::layer_norm_backward(blk.norm2, cache.x_mid[i], mixer_backward(blk.chan, gb.chan, n2, dx), gb.norm2);
      const Mat n1 = nn::layer_norm(blk.norm1, cache.x_in[i]);
      dx += nn::layer_norm_backward(blk.norm1, cache.x_in[i], mixer_backward(blk.seq, gb.seq, n1, dx), gb.norm1);
    }
    nn::linear_backward(unfold_patches(cfg, images, b), w.patch_w, dx, g.patch_w, &g.patch_b);
    g.pos += dx;
  }
  return g;
}

EigenReport eigen_report(const Weights& w, int bins) {
  require(bins >= 1, ErrorKind::InvalidArgument, "bins must be >= 1");
  EigenReport r;
  auto collect = [&](const mix::SelectiveBranch& br) {
    for (Eigen::Index i = 0; i < br.a_log.size(); ++i) r.values.push_back(-std::exp(br.a_log.data()[i]));
  };
  for (const auto& blk : w.blocks) {
    if (auto* mv = std::get_if<mix::MVWeights>(&blk.seq)) collect(mv->ssm);
    if (auto* vim = std::get_if<mix::ViMWeights>(&blk.seq)) collect(vim->fwd), collect(vim->bwd);
    if (auto* hy = std::get_if<mix::HydraWeights>(&blk.seq)) collect(hy->ssm);
  }
  require(!r.values.empty(), ErrorKind::NoSSMBlocks, "model contains no SSM blocks");
  const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
  r.min = *lo;
  r.max = *hi;
  require(r.max < 0.0, ErrorKind::DomainError, "realized eigenvalue is not strictly negative");
  r.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) r.edges[i] = r.min + (r.max - r.min) * i / bins;
  r.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = r.max - r.min;
  for (double v : r.values) {
    int k = width > 0.0 ? static_cast<int>((v - r.min) / width * bins) : 0;
    ++r.counts[std::clamp(k, 0, bins - 1)];
  }
  return r;
}

}  // namespace mvh::backbone
