#include "anosups/attention.hpp"

#include <cmath>
#include <numbers>

#include "anosups/error.hpp"

namespace anosups {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using RowVec = Eigen::RowVectorXd;

constexpr double kLayerNormEps = 1e-5;

// tanh approximation of GELU and its derivative.
constexpr double kGeluC = 0.044715;
const double kGeluK = std::sqrt(2.0 / std::numbers::pi);

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
}

double gelu_grad(double x) {
  const double u = kGeluK * (x + kGeluC * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluK * (1.0 + 3.0 * kGeluC * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

struct LayerNormOut {
  RowMat xhat;
  Eigen::VectorXd rstd;
};

RowMat layer_norm(const RowMat& x, const ConstMap& gain, const ConstMap& bias, LayerNormOut& out) {
  const auto n = x.cols();
  out.xhat.resize(x.rows(), n);
  out.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    out.rstd(r) = rstd;
    out.xhat.row(r) = (x.row(r).array() - mean) * rstd;
  }
  RowMat y = out.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

// Returns dL/dx and accumulates gain/bias gradients.
RowMat layer_norm_backward(const RowMat& dy, const LayerNormOut& ln, const ConstMap& gain,
                           MutMap dgain, MutMap dbias) {
  dgain.row(0) += (dy.array() * ln.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  RowMat dxhat = dy.array().rowwise() * gain.row(0).array();
  RowMat dx(dy.rows(), dy.cols());
  const double n = static_cast<double>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / n;
    const double mean_dx = dxhat.row(r).dot(ln.xhat.row(r)) / n;
    dx.row(r) = ln.rstd(r) * (dxhat.row(r).array() - mean_d - ln.xhat.row(r).array() * mean_dx);
  }
  return dx;
}

// 2D sine-cosine position table. Channels come in (sin, cos) pairs that
// alternate between the column and row axes, so every attention head sees
// both axes and the inner product of two rows is a sum of cos(omega * delta)
// terms. Frequencies fall geometrically from pi/2 rad per patch to a quarter
// period across the grid, highest frequencies in the first head.
void fill_sincos_positions(const GridGeometry& geometry, int dim, double* out) {
  const int pairs = dim / 2;
  const int per_axis = std::max(1, pairs / 2);
  const double extent = std::max(2, std::max(geometry.rows, geometry.cols));
  const double high = std::numbers::pi / 2.0;
  const double low = std::numbers::pi / (2.0 * extent);
  for (int i = 0; i < geometry.num_patches(); ++i) {
    const double coords[2] = {static_cast<double>(i % geometry.cols),
                              static_cast<double>(i / geometry.cols)};
    double* row = out + static_cast<std::size_t>(i) * dim;
    for (int p = 0; p < pairs; ++p) {
      const int axis = p % 2;
      const int f = p / 2;
      const double t = per_axis > 1 ? static_cast<double>(f) / (per_axis - 1) : 0.0;
      const double omega = high * std::pow(low / high, t);
      row[2 * p] = std::sin(coords[axis] * omega);
      row[2 * p + 1] = std::cos(coords[axis] * omega);
    }
  }
}

}  // namespace

std::vector<Eigen::MatrixXd> distance_bias(const GridGeometry& geometry, int heads) {
  const int m = geometry.num_patches();
  std::vector<Eigen::MatrixXd> out;
  for (int h = 0; h < heads; ++h) {
    const double slope = h + 1 < heads ? std::ldexp(2.0, -h) : 0.0;
    Eigen::MatrixXd bias(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const double dy = i / geometry.cols - j / geometry.cols;
        const double dx = i % geometry.cols - j % geometry.cols;
        bias(i, j) = -slope * std::sqrt(dy * dy + dx * dx);
      }
    }
    out.push_back(std::move(bias));
  }
  return out;
}

ParamLayout::ParamLayout(const GridGeometry& geometry, const AttentionConfig& config) {
  if (config.embed_dim <= 0 || config.heads <= 0 || config.embed_dim % config.heads != 0) {
    throw Error(ErrorCode::kInvalidArgument, "embed_dim must be a positive multiple of heads");
  }
  if (config.blocks < 0 || config.mlp_ratio <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "blocks >= 0 and mlp_ratio >= 1 required");
  }
  const int d = config.embed_dim;
  const int hidden = d * config.mlp_ratio;
  const int dim = geometry.patch_dim();
  add("patch_embed.weight", dim, d);
  add("patch_embed.bias", 1, d);
  add("pos_embed", geometry.num_patches(), d);
  add("mask_token", 1, d);
  for (int l = 0; l < config.blocks; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    add(p + "norm1.gain", 1, d);
    add(p + "norm1.bias", 1, d);
    add(p + "attn.query.weight", d, d);
    add(p + "attn.query.bias", 1, d);
    add(p + "attn.key.weight", d, d);
    add(p + "attn.key.bias", 1, d);
    add(p + "attn.value.weight", d, d);
    add(p + "attn.value.bias", 1, d);
    add(p + "attn.proj.weight", d, d);
    add(p + "attn.proj.bias", 1, d);
    add(p + "norm2.gain", 1, d);
    add(p + "norm2.bias", 1, d);
    add(p + "mlp.fc1.weight", d, hidden);
    add(p + "mlp.fc1.bias", 1, hidden);
    add(p + "mlp.fc2.weight", hidden, d);
    add(p + "mlp.fc2.bias", 1, d);
  }
  add("norm.gain", 1, d);
  add("norm.bias", 1, d);
  add("head.weight", d, dim);
  add("head.bias", 1, dim);
}

void ParamLayout::add(std::string name, int rows, int cols) {
  tensors_.push_back({std::move(name), rows, cols, total_});
  total_ += tensors_.back().size();
}

const ParamTensor& ParamLayout::at(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter " + name);
}

struct AttentionModel::Cache {
  struct Block {
    RowMat x_in;
    LayerNormOut ln1;
    RowMat a, q, k, v;
    std::vector<RowMat> probs;
    RowMat o;
    RowMat x_mid;
    LayerNormOut ln2;
    RowMat b, h, g;
  };
  std::vector<int> visible;
  RowMat visible_patches;
  std::vector<Block> blocks;
  LayerNormOut ln_final;
  RowMat f;
};

AttentionModel::AttentionModel(const GridGeometry& geometry, const AttentionConfig& config,
                               std::vector<double> parameters)
    : geometry_(geometry), config_(config), layout_(geometry, config),
      parameters_(parameters.begin(), parameters.end()),
      distance_bias_(distance_bias(geometry, config.heads)) {
  if (parameters_.size() != layout_.total()) {
    throw Error(ErrorCode::kShapeMismatch, "attention parameter count " +
                                               std::to_string(parameters_.size()) + " != " +
                                               std::to_string(layout_.total()));
  }
}

AttentionModel AttentionModel::initialize(const GridGeometry& geometry,
                                          const AttentionConfig& config, Seed seed) {
  ParamLayout layout(geometry, config);
  std::vector<double> params(layout.total(), 0.0);
  Rng rng(seed);
  for (const auto& t : layout.tensors()) {
    double* p = params.data() + t.offset;
    const auto& name = t.name;
    auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".gain")) {
      std::fill_n(p, t.size(), 1.0);
    } else if (name == "pos_embed") {
      fill_sincos_positions(geometry, config.embed_dim, p);
    } else if (name == "mask_token") {
      for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.normal(0.0, 0.02);
    } else if (ends_with(".weight")) {
      const double stddev = std::sqrt(2.0 / (t.rows + t.cols));
      for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.normal(0.0, stddev);
    } else if (name == "head.bias") {
      std::fill_n(p, t.size(), 0.5);
    }
  }
  return AttentionModel(geometry, config, std::move(params));
}

Eigen::MatrixXd AttentionModel::forward(const PatchGrid& grid, std::span<const int> targets,
                                        Cache* cache) const {
  require_same_geometry(geometry_, GridGeometry::of(grid), "attention model");
  const int m = geometry_.num_patches();
  const int d = config_.embed_dim;
  const int dim = geometry_.patch_dim();
  const int heads = config_.heads;
  const int head_dim = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const double* base = parameters_.data();
  auto param = [&](const std::string& name) {
    const auto& t = layout_.at(name);
    return ConstMap(base + t.offset, t.rows, t.cols);
  };

  std::vector<int> visible = grid.visible_indices();
  RowMat patches(static_cast<Eigen::Index>(visible.size()), dim);
  for (std::size_t r = 0; r < visible.size(); ++r) {
    auto values = grid.patch(visible[r]);
    patches.row(static_cast<Eigen::Index>(r)) =
        Eigen::Map<const RowVec>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  RowMat x = param("pos_embed");
  {
    RowMat embedded = patches * param("patch_embed.weight");
    embedded.rowwise() += param("patch_embed.bias").row(0);
    std::vector<std::uint8_t> is_visible(static_cast<std::size_t>(m), 0);
    for (std::size_t r = 0; r < visible.size(); ++r) {
      x.row(visible[r]) += embedded.row(static_cast<Eigen::Index>(r));
      is_visible[static_cast<std::size_t>(visible[r])] = 1;
    }
    const auto mask_token = param("mask_token");
    for (int i = 0; i < m; ++i) {
      if (!is_visible[static_cast<std::size_t>(i)]) x.row(i) += mask_token.row(0);
    }
  }
  if (cache) {
    cache->visible = std::move(visible);
    cache->visible_patches = std::move(patches);
    cache->blocks.resize(static_cast<std::size_t>(config_.blocks));
  }

  for (int l = 0; l < config_.blocks; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    Cache::Block local;
    Cache::Block& bc = cache ? cache->blocks[static_cast<std::size_t>(l)] : local;
    if (cache) bc.x_in = x;

    bc.a = layer_norm(x, param(p + "norm1.gain"), param(p + "norm1.bias"), bc.ln1);
    bc.q = bc.a * param(p + "attn.query.weight");
    bc.q.rowwise() += param(p + "attn.query.bias").row(0);
    bc.k = bc.a * param(p + "attn.key.weight");
    bc.k.rowwise() += param(p + "attn.key.bias").row(0);
    bc.v = bc.a * param(p + "attn.value.weight");
    bc.v.rowwise() += param(p + "attn.value.bias").row(0);

    bc.o.resize(m, d);
    bc.probs.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto cols = Eigen::seqN(h * head_dim, head_dim);
      RowMat scores = (bc.q(Eigen::all, cols) * bc.k(Eigen::all, cols).transpose()) * scale;
      scores += distance_bias_[static_cast<std::size_t>(h)];
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      bc.o(Eigen::all, cols).noalias() = scores * bc.v(Eigen::all, cols);
      bc.probs[static_cast<std::size_t>(h)] = std::move(scores);
    }
    RowMat attn_out = bc.o * param(p + "attn.proj.weight");
    attn_out.rowwise() += param(p + "attn.proj.bias").row(0);
    x += attn_out;
    if (cache) bc.x_mid = x;

    bc.b = layer_norm(x, param(p + "norm2.gain"), param(p + "norm2.bias"), bc.ln2);
    bc.h = bc.b * param(p + "mlp.fc1.weight");
    bc.h.rowwise() += param(p + "mlp.fc1.bias").row(0);
    bc.g = bc.h.unaryExpr([](double v) { return gelu(v); });
    RowMat mlp_out = bc.g * param(p + "mlp.fc2.weight");
    mlp_out.rowwise() += param(p + "mlp.fc2.bias").row(0);
    x += mlp_out;
  }

  LayerNormOut ln_local;
  LayerNormOut& ln_final = cache ? cache->ln_final : ln_local;
  RowMat f = layer_norm(x, param("norm.gain"), param("norm.bias"), ln_final);

  RowMat selected(static_cast<Eigen::Index>(targets.size()), d);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    selected.row(static_cast<Eigen::Index>(t)) = f.row(targets[t]);
  }
  RowMat out = selected * param("head.weight");
  out.rowwise() += param("head.bias").row(0);
  if (cache) cache->f = std::move(f);
  return out;
}

Eigen::MatrixXd AttentionModel::predict(const PatchGrid& grid, std::span<const int> targets) const {
  return forward(grid, targets, nullptr);
}

double AttentionModel::loss(const TrainingSample& sample) const {
  Eigen::MatrixXd pred = forward(sample.input, sample.targets, nullptr);
  return (pred - sample.truth).squaredNorm() / static_cast<double>(pred.size());
}

double AttentionModel::accumulate_gradient(const TrainingSample& sample, double scale,
                                           std::span<double> out) const {
  if (out.size() != parameters_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient buffer size");
  }
  // Eigen's vectorized reductions round differently depending on the
  // destination address, so accumulate into an Eigen-aligned buffer and add
  // it to the caller's span afterwards. Results are then bit-identical for
  // any caller buffer and any thread.
  Eigen::VectorXd gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out.size()));
  Cache cache;
  const Eigen::MatrixXd pred = forward(sample.input, sample.targets, &cache);
  if (pred.rows() != sample.truth.rows() || pred.cols() != sample.truth.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "truth shape does not match targets");
  }
  const double count = static_cast<double>(pred.size());
  const double loss = (pred - sample.truth).squaredNorm() / count;

  const int m = geometry_.num_patches();
  const int d = config_.embed_dim;
  const int heads = config_.heads;
  const int head_dim = d / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const double* base = parameters_.data();
  auto param = [&](const std::string& name) {
    const auto& t = layout_.at(name);
    return ConstMap(base + t.offset, t.rows, t.cols);
  };
  auto grad = [&](const std::string& name) {
    const auto& t = layout_.at(name);
    return MutMap(gradient.data() + t.offset, t.rows, t.cols);
  };

  // Head.
  const RowMat dy = (2.0 * scale / count) * (pred - sample.truth);
  RowMat selected(static_cast<Eigen::Index>(sample.targets.size()), d);
  for (std::size_t t = 0; t < sample.targets.size(); ++t) {
    selected.row(static_cast<Eigen::Index>(t)) = cache.f.row(sample.targets[t]);
  }
  grad("head.weight").noalias() += selected.transpose() * dy;
  grad("head.bias").row(0) += dy.colwise().sum();
  RowMat df = RowMat::Zero(m, d);
  {
    RowMat dsel = dy * param("head.weight").transpose();
    for (std::size_t t = 0; t < sample.targets.size(); ++t) {
      df.row(sample.targets[t]) += dsel.row(static_cast<Eigen::Index>(t));
    }
  }
  RowMat dx = layer_norm_backward(df, cache.ln_final, param("norm.gain"), grad("norm.gain"),
                                  grad("norm.bias"));

  for (int l = config_.blocks - 1; l >= 0; --l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    const auto& bc = cache.blocks[static_cast<std::size_t>(l)];

    // MLP branch.
    grad(p + "mlp.fc2.weight").noalias() += bc.g.transpose() * dx;
    grad(p + "mlp.fc2.bias").row(0) += dx.colwise().sum();
    RowMat dh = dx * param(p + "mlp.fc2.weight").transpose();
    dh.array() *= bc.h.unaryExpr([](double v) { return gelu_grad(v); }).array();
    grad(p + "mlp.fc1.weight").noalias() += bc.b.transpose() * dh;
    grad(p + "mlp.fc1.bias").row(0) += dh.colwise().sum();
    RowMat db = dh * param(p + "mlp.fc1.weight").transpose();
    dx += layer_norm_backward(db, bc.ln2, param(p + "norm2.gain"), grad(p + "norm2.gain"),
                              grad(p + "norm2.bias"));

    // Attention branch.
    grad(p + "attn.proj.weight").noalias() += bc.o.transpose() * dx;
    grad(p + "attn.proj.bias").row(0) += dx.colwise().sum();
    RowMat d_o = dx * param(p + "attn.proj.weight").transpose();
    RowMat dq(m, d), dk(m, d), dv(m, d);
    for (int h = 0; h < heads; ++h) {
      const auto cols = Eigen::seqN(h * head_dim, head_dim);
      const RowMat& probs = bc.probs[static_cast<std::size_t>(h)];
      RowMat d_oh = d_o(Eigen::all, cols);
      RowMat dprobs = d_oh * bc.v(Eigen::all, cols).transpose();
      dv(Eigen::all, cols).noalias() = probs.transpose() * d_oh;
      Eigen::VectorXd row_dot = (dprobs.array() * probs.array()).rowwise().sum();
      RowMat dscores = probs.array() * (dprobs.colwise() - row_dot).array();
      dscores *= attn_scale;
      dq(Eigen::all, cols).noalias() = dscores * bc.k(Eigen::all, cols);
      dk(Eigen::all, cols).noalias() = dscores.transpose() * bc.q(Eigen::all, cols);
    }
    grad(p + "attn.query.weight").noalias() += bc.a.transpose() * dq;
    grad(p + "attn.query.bias").row(0) += dq.colwise().sum();
    grad(p + "attn.key.weight").noalias() += bc.a.transpose() * dk;
    grad(p + "attn.key.bias").row(0) += dk.colwise().sum();
    grad(p + "attn.value.weight").noalias() += bc.a.transpose() * dv;
    grad(p + "attn.value.bias").row(0) += dv.colwise().sum();
    RowMat da = dq * param(p + "attn.query.weight").transpose();
    da.noalias() += dk * param(p + "attn.key.weight").transpose();
    da.noalias() += dv * param(p + "attn.value.weight").transpose();
    dx += layer_norm_backward(da, bc.ln1, param(p + "norm1.gain"), grad(p + "norm1.gain"),
                              grad(p + "norm1.bias"));
  }

  // Embeddings.
  grad("pos_embed") += dx;
  std::vector<std::uint8_t> is_visible(static_cast<std::size_t>(m), 0);
  RowMat dvis(static_cast<Eigen::Index>(cache.visible.size()), d);
  for (std::size_t r = 0; r < cache.visible.size(); ++r) {
    dvis.row(static_cast<Eigen::Index>(r)) = dx.row(cache.visible[r]);
    is_visible[static_cast<std::size_t>(cache.visible[r])] = 1;
  }
  grad("patch_embed.weight").noalias() += cache.visible_patches.transpose() * dvis;
  grad("patch_embed.bias").row(0) += dvis.colwise().sum();
  auto dmask = grad("mask_token");
  for (int i = 0; i < m; ++i) {
    if (!is_visible[static_cast<std::size_t>(i)]) dmask.row(0) += dx.row(i);
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += gradient[static_cast<Eigen::Index>(j)];
  return loss;
}

LossAndGradient model_gradient(const AttentionModel& model, std::span<const TrainingSample> batch) {
  LossAndGradient out;
  out.gradient.assign(model.parameters().size(), 0.0);
  if (batch.empty()) return out;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    out.loss += scale * model.accumulate_gradient(sample, scale, out.gradient);
  }
  return out;
}

}  // namespace anosups
