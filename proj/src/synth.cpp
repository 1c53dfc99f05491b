#include "anosups/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "anosups/error.hpp"

namespace anosups {

namespace {

constexpr double kMinContrast = 0.2;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

double base_channel(const TextureParams& params, int c) {
  return params.channels == 1 ? params.base[0] : params.base[static_cast<std::size_t>(c)];
}

double segment_distance(double px, double py, const Point& a, const Point& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - px;
  const double ey = a.y + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void check_bounds(const AnomalySpec& spec, int height, int width) {
  auto inside = [&](double x, double y, double margin) {
    return x - margin >= 0.0 && y - margin >= 0.0 && x + margin <= width && y + margin <= height;
  };
  switch (spec.kind) {
    case AnomalyKind::kLine: {
      const double len = std::hypot(spec.to.x - spec.from.x, spec.to.y - spec.from.y);
      if (len < 1.0) throw Error(ErrorCode::kOutOfBounds, "line must be at least one pixel long");
      if (spec.thickness < 1.0) throw Error(ErrorCode::kOutOfBounds, "line thickness below 1 px");
      const double margin = spec.thickness / 2.0;
      if (!inside(spec.from.x, spec.from.y, margin) || !inside(spec.to.x, spec.to.y, margin)) {
        throw Error(ErrorCode::kOutOfBounds, "line leaves the image");
      }
      break;
    }
    case AnomalyKind::kColor:
    case AnomalyKind::kHole: {
      if (spec.radius < 1.0) throw Error(ErrorCode::kOutOfBounds, "radius below 1 px");
      if (spec.centers.empty()) throw Error(ErrorCode::kOutOfBounds, "no disk centers");
      if (spec.kind == AnomalyKind::kColor && spec.centers.size() != 1) {
        throw Error(ErrorCode::kOutOfBounds, "color anomaly takes exactly one center");
      }
      for (const auto& c : spec.centers) {
        if (!inside(c.x, c.y, spec.radius)) throw Error(ErrorCode::kOutOfBounds, "disk leaves the image");
      }
      break;
    }
  }
}

}  // namespace

const char* texture_name(TextureKind kind) {
  switch (kind) {
    case TextureKind::kGrid: return "grid";
    case TextureKind::kStripes: return "stripes";
    case TextureKind::kBlotch: return "blotch";
  }
  return "unknown";
}

TextureKind parse_texture(const std::string& name) {
  if (name == "grid") return TextureKind::kGrid;
  if (name == "stripes") return TextureKind::kStripes;
  if (name == "blotch") return TextureKind::kBlotch;
  throw Error(ErrorCode::kInvalidArgument, "unknown texture '" + name + "'");
}

const char* anomaly_name(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kLine: return "line";
    case AnomalyKind::kColor: return "color";
    case AnomalyKind::kHole: return "hole";
  }
  return "unknown";
}

AnomalyKind parse_anomaly(const std::string& name) {
  if (name == "line") return AnomalyKind::kLine;
  if (name == "color") return AnomalyKind::kColor;
  if (name == "hole") return AnomalyKind::kHole;
  throw Error(ErrorCode::kInvalidArgument, "unknown anomaly kind '" + name + "'");
}

ImageTensor generate_texture(const TextureParams& params, Seed seed) {
  if (params.height <= 0 || params.width <= 0 || (params.channels != 1 && params.channels != 3)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid texture geometry");
  }
  if (params.period < 1 || params.line_width < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid texture period");
  }
  Rng rng(seed);
  const double offset = params.jitter > 0 ? rng.uniform(-params.jitter, params.jitter) : 0.0;
  const int phase_x = params.jitter > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(params.period))) : 0;
  const int phase_y = params.jitter > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(params.period))) : 0;
  std::array<double, 3> phases{};
  for (double& ph : phases) ph = params.jitter > 0 ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
  const double shade_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double shade_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  ImageTensor image(params.height, params.width, params.channels);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int y = 0; y < params.height; ++y) {
    for (int x = 0; x < params.width; ++x) {
      double pattern = 0.0;
      switch (params.kind) {
        case TextureKind::kGrid: {
          const bool on_line = (x + phase_x) % params.period < params.line_width ||
                               (y + phase_y) % params.period < params.line_width;
          pattern = on_line ? -params.contrast : 0.0;
          break;
        }
        case TextureKind::kStripes:
          pattern = 0.5 * params.contrast *
                    std::sin(two_pi * (x + y + phase_x) / params.period);
          break;
        case TextureKind::kBlotch: {
          const double u = static_cast<double>(x) / params.width;
          const double v = static_cast<double>(y) / params.height;
          pattern = params.contrast / 6.0 *
                    (std::cos(two_pi * (1 * u + 2 * v) + phases[0]) +
                     std::cos(two_pi * (2 * u + 1 * v) + phases[1]) +
                     std::cos(two_pi * (3 * u + 3 * v) + phases[2]));
          break;
        }
      }
      double shade = 0.0;
      if (params.shading > 0) {
        const double s = (std::cos(shade_angle) * x / params.width + std::sin(shade_angle) * y / params.height);
        shade = params.shading * std::cos(std::numbers::pi * s + shade_phase);
      }
      for (int c = 0; c < params.channels; ++c) {
        double value = base_channel(params, c) + offset + pattern + shade;
        if (params.noise > 0) value += rng.normal(0.0, params.noise);
        image.at(y, x, c) = quantize(value);
      }
    }
  }
  return image;
}

BinaryMask anomaly_shape(const AnomalySpec& spec, int height, int width) {
  BinaryMask mask(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      bool hit = false;
      if (spec.kind == AnomalyKind::kLine) {
        hit = segment_distance(px, py, spec.from, spec.to) <= spec.thickness / 2.0;
      } else {
        for (const auto& c : spec.centers) {
          const double dx = px - c.x;
          const double dy = py - c.y;
          if (dx * dx + dy * dy <= spec.radius * spec.radius) {
            hit = true;
            break;
          }
        }
      }
      mask.at(y, x) = hit;
    }
  }
  return mask;
}

LabeledImage inject(const ImageTensor& image, const AnomalySpec& spec) {
  check_bounds(spec, image.height(), image.width());
  LabeledImage out;
  out.image = image;
  out.gt_mask = anomaly_shape(spec, image.height(), image.width());
  out.specs.push_back(spec);
  const int channels = image.channels();
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!out.gt_mask.at(y, x)) continue;
      double change = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double target =
            spec.kind == AnomalyKind::kHole ? 0.0 : quantize(spec.fill[static_cast<std::size_t>(c)]);
        change = std::max(change, std::abs(target - image.at(y, x, c)));
        out.image.at(y, x, c) = target;
      }
      if (change < kMinContrast) {
        throw Error(ErrorCode::kInvalidArgument,
                    "anomaly fill within 0.2 of the background at (" + std::to_string(x) + ", " +
                        std::to_string(y) + ")");
      }
    }
  }
  return out;
}

namespace {

// Geometry for one anomaly of nominal extent `size` pixels.
AnomalySpec draw_geometry(AnomalyKind kind, double size, const SuiteConfig& config, Rng& rng) {
  const int height = config.texture.height;
  const int width = config.texture.width;
  const int p = config.patch_size;
  const bool sub_patch = size < p;
  AnomalySpec spec;
  spec.kind = kind;

  // Window [x0, x1) x [y0, y1) the anomaly must stay inside.
  double x0 = 0, y0 = 0, x1 = width, y1 = height;
  if (sub_patch) {
    const int cols = width / p;
    const int rows = height / p;
    const auto cell = static_cast<int>(rng.below(static_cast<std::uint64_t>(rows * cols)));
    x0 = (cell % cols) * p;
    y0 = (cell / cols) * p;
    x1 = x0 + p;
    y1 = y0 + p;
  }
  auto pick = [&](double lo, double hi) { return lo < hi ? rng.uniform(lo, hi) : 0.5 * (lo + hi); };

  switch (kind) {
    case AnomalyKind::kLine: {
      spec.thickness = sub_patch ? static_cast<double>(rng.range(1, 2)) : static_cast<double>(rng.range(1, 3));
      const double margin = spec.thickness / 2.0 + 0.5;
      double length = std::max(2.0, size);
      length = std::min(length, std::min(x1 - x0, y1 - y0) - 2.0 * margin);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double hx = 0.5 * length * std::cos(angle);
      const double hy = 0.5 * length * std::sin(angle);
      const double cx = pick(x0 + margin + std::abs(hx), x1 - margin - std::abs(hx));
      const double cy = pick(y0 + margin + std::abs(hy), y1 - margin - std::abs(hy));
      spec.from = {cx - hx, cy - hy};
      spec.to = {cx + hx, cy + hy};
      break;
    }
    case AnomalyKind::kColor: {
      spec.radius = std::max(1.0, size / 2.0);
      spec.radius = std::min(spec.radius, 0.5 * std::min(x1 - x0, y1 - y0) - 0.5);
      spec.centers.push_back({pick(x0 + spec.radius, x1 - spec.radius), pick(y0 + spec.radius, y1 - spec.radius)});
      break;
    }
    case AnomalyKind::kHole: {
      const int count = static_cast<int>(rng.range(1, 3));
      spec.radius = std::max(1.0, size / 4.0);
      const double box = std::max(size, 2.0 * spec.radius);
      const double bx = pick(x0 + 0.5 * box, x1 - 0.5 * box);
      const double by = pick(y0 + 0.5 * box, y1 - 0.5 * box);
      for (int i = 0; i < count; ++i) {
        const double lo_x = std::max(x0 + spec.radius, bx - 0.5 * box + spec.radius);
        const double hi_x = std::min(x1 - spec.radius, bx + 0.5 * box - spec.radius);
        const double lo_y = std::max(y0 + spec.radius, by - 0.5 * box + spec.radius);
        const double hi_y = std::min(y1 - spec.radius, by + 0.5 * box - spec.radius);
        spec.centers.push_back({pick(lo_x, hi_x), pick(lo_y, hi_y)});
      }
      break;
    }
  }
  return spec;
}

std::vector<AnomalyKind> allocate_kinds(const AnomalyMix& mix, int n_abnormal) {
  const std::array<std::pair<AnomalyKind, int>, 3> weights{
      {{AnomalyKind::kLine, mix.line}, {AnomalyKind::kColor, mix.color}, {AnomalyKind::kHole, mix.hole}}};
  int total = 0;
  for (const auto& [kind, w] : weights) {
    if (w < 0) throw Error(ErrorCode::kInvalidArgument, "anomaly mix weights must be >= 0");
    total += w;
  }
  if (total == 0 && n_abnormal > 0) throw Error(ErrorCode::kInvalidArgument, "anomaly mix is empty");
  // Largest-remainder allocation, ties broken by kind order.
  std::array<int, 3> counts{};
  std::array<double, 3> remainders{};
  int assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n_abnormal) * weights[i].second / std::max(total, 1);
    counts[i] = static_cast<int>(std::floor(exact));
    remainders[i] = exact - counts[i];
    assigned += counts[i];
  }
  while (assigned < n_abnormal) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      if (remainders[i] > remainders[best]) best = i;
    }
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }
  std::vector<AnomalyKind> kinds;
  for (std::size_t i = 0; i < 3; ++i) kinds.insert(kinds.end(), static_cast<std::size_t>(counts[i]), weights[i].first);
  return kinds;
}

std::string image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%04d", index);
  return buf;
}

}  // namespace

std::vector<LabeledImage> build_suite(const SuiteConfig& config) {
  if (config.n_images < 1) throw Error(ErrorCode::kInvalidArgument, "n_images must be >= 1");
  if (config.size_min < 1 || config.size_max < config.size_min) {
    throw Error(ErrorCode::kInvalidArgument, "anomaly size range must satisfy 1 <= min <= max");
  }
  if (config.patch_size < 1 || config.texture.height % config.patch_size != 0 ||
      config.texture.width % config.patch_size != 0) {
    throw Error(ErrorCode::kNonDivisibleDimensions, "texture size not divisible by patch size");
  }
  if (config.size_max > std::min(config.texture.height, config.texture.width) - 2) {
    throw Error(ErrorCode::kInvalidArgument, "size_max does not fit in the image");
  }
  const int n_abnormal = config.n_images / 2;
  std::vector<AnomalyKind> kinds = allocate_kinds(config.mix, n_abnormal);
  Rng kind_rng(derive_seed(config.seed, "kind-order"));
  kind_rng.shuffle(kinds);

  // Sizes evenly spread per kind.
  std::array<int, 3> per_kind{};
  for (auto k : kinds) ++per_kind[static_cast<std::size_t>(k)];
  std::array<int, 3> seen{};

  const Seed texture_seed = derive_seed(config.seed, "suite-texture");
  const Seed anomaly_seed = derive_seed(config.seed, "suite-anomaly");
  std::vector<LabeledImage> suite;
  int abnormal_index = 0;
  for (int i = 0; i < config.n_images; ++i) {
    ImageTensor base = generate_texture(config.texture, derive_seed(texture_seed, static_cast<std::uint64_t>(i)));
    const bool abnormal = (i % 2 == 1) && abnormal_index < n_abnormal;
    if (!abnormal) {
      suite.push_back({image_name(i), std::move(base), BinaryMask(config.texture.height, config.texture.width), {}});
      continue;
    }
    const AnomalyKind kind = kinds[static_cast<std::size_t>(abnormal_index++)];
    const auto slot = static_cast<std::size_t>(kind);
    const int j = seen[slot]++;
    const int n_kind = per_kind[slot];
    const double size = n_kind > 1 ? config.size_min + (config.size_max - config.size_min) * static_cast<double>(j) / (n_kind - 1)
                                   : 0.5 * (config.size_min + config.size_max);
    const Seed seed = derive_seed(anomaly_seed, static_cast<std::uint64_t>(i));
    Rng rng(seed);
    bool done = false;
    for (int attempt = 0; attempt < 200 && !done; ++attempt) {
      AnomalySpec spec = draw_geometry(kind, size, config, rng);
      spec.seed = seed;
      if (kind == AnomalyKind::kLine) {
        const double v = rng.uniform(0.0, 0.08);
        spec.fill = {v, v, v};
      } else if (kind == AnomalyKind::kColor) {
        for (double& f : spec.fill) f = rng.uniform();
      }
      for (double& f : spec.fill) f = quantize(f);
      try {
        LabeledImage labeled = inject(base, spec);
        labeled.name = image_name(i);
        suite.push_back(std::move(labeled));
        done = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInvalidArgument) throw;
      }
    }
    if (!done) throw Error(ErrorCode::kInvalidArgument, "could not place a contrasting anomaly");
  }
  return suite;
}

std::vector<ImageTensor> build_normals(const TextureParams& texture, int count, Seed seed) {
  std::vector<ImageTensor> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back(generate_texture(texture, derive_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

std::uint64_t image_hash(const ImageTensor& image) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  mix(static_cast<std::uint64_t>(image.height()));
  mix(static_cast<std::uint64_t>(image.width()));
  mix(static_cast<std::uint64_t>(image.channels()));
  for (double v : image.data()) mix(static_cast<std::uint64_t>(std::lround(v * 255.0)));
  return h;
}

std::uint64_t mask_hash(const BinaryMask& mask) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  mix(static_cast<std::uint64_t>(mask.height));
  mix(static_cast<std::uint64_t>(mask.width));
  for (auto v : mask.data) mix(v);
  return h;
}

}  // namespace anosups
