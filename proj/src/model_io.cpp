#include "anosups/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "anosups/error.hpp"

namespace anosups {

namespace {

constexpr char kMagic[8] = {'A', 'N', 'O', 'S', 'U', 'P', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw Error(ErrorCode::kFormat, "truncated model file");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

struct Header {
  std::uint32_t kind = 0;
  GridGeometry geometry;
  AttentionConfig attention;
  std::uint32_t rank = 0;
};

Header header_of(const ReconstructorModel& model) {
  Header h;
  h.kind = static_cast<std::uint32_t>(model.variant().index());
  h.geometry = model.geometry();
  if (model.kind() == ReconstructorKind::kAttention) h.attention = model.as<AttentionModel>().config();
  if (model.kind() == ReconstructorKind::kPca) h.rank = static_cast<std::uint32_t>(model.as<PcaModel>().rank);
  return h;
}

std::vector<std::vector<double>> arrays_of(const ReconstructorModel& model) {
  std::vector<std::vector<double>> arrays;
  switch (model.kind()) {
    case ReconstructorKind::kAttention: {
      auto p = model.as<AttentionModel>().parameters();
      arrays.emplace_back(p.begin(), p.end());
      break;
    }
    case ReconstructorKind::kPca: {
      const auto& pca = model.as<PcaModel>();
      arrays.emplace_back(pca.mean.data(), pca.mean.data() + pca.mean.size());
      arrays.emplace_back(pca.basis.data(), pca.basis.data() + pca.basis.size());
      break;
    }
    case ReconstructorKind::kPositionalMean: {
      const auto& means = model.as<PositionalMeanModel>().means;
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(means.size()));
      for (Eigen::Index r = 0; r < means.rows(); ++r) {
        for (Eigen::Index c = 0; c < means.cols(); ++c) flat.push_back(means(r, c));
      }
      arrays.push_back(std::move(flat));
      break;
    }
  }
  return arrays;
}

void expect_length(const std::vector<double>& array, std::size_t expected, const char* what) {
  if (array.size() != expected) {
    throw Error(ErrorCode::kFormat, std::string(what) + " has " + std::to_string(array.size()) +
                                        " values, expected " + std::to_string(expected));
  }
}

}  // namespace

void save_model(const std::filesystem::path& path, const ReconstructorModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const Header h = header_of(model);
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, h.kind);
  for (int v : {h.geometry.patch_size, h.geometry.channels, h.geometry.rows, h.geometry.cols,
                h.attention.embed_dim, h.attention.heads, h.attention.blocks, h.attention.mlp_ratio}) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  put_le<std::uint32_t>(out, h.rank);
  const auto arrays = arrays_of(model);
  put_le<std::uint64_t>(out, arrays.size());
  for (const auto& array : arrays) {
    put_le<std::uint64_t>(out, array.size());
    for (double v : array) put_le<double>(out, v);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

ReconstructorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kFormat, path.string() + " is not an ANOSUPS1 model");
  }
  if (get_le<std::uint32_t>(in) != kVersion) throw Error(ErrorCode::kFormat, "unsupported model version");
  Header h;
  h.kind = get_le<std::uint32_t>(in);
  h.geometry.patch_size = static_cast<int>(get_le<std::uint32_t>(in));
  h.geometry.channels = static_cast<int>(get_le<std::uint32_t>(in));
  h.geometry.rows = static_cast<int>(get_le<std::uint32_t>(in));
  h.geometry.cols = static_cast<int>(get_le<std::uint32_t>(in));
  h.attention.embed_dim = static_cast<int>(get_le<std::uint32_t>(in));
  h.attention.heads = static_cast<int>(get_le<std::uint32_t>(in));
  h.attention.blocks = static_cast<int>(get_le<std::uint32_t>(in));
  h.attention.mlp_ratio = static_cast<int>(get_le<std::uint32_t>(in));
  h.rank = get_le<std::uint32_t>(in);
  const auto count = get_le<std::uint64_t>(in);
  if (count > 16) throw Error(ErrorCode::kFormat, "implausible array count");
  std::vector<std::vector<double>> arrays;
  for (std::uint64_t a = 0; a < count; ++a) {
    const auto length = get_le<std::uint64_t>(in);
    if (length > (std::uint64_t{1} << 32)) throw Error(ErrorCode::kFormat, "implausible array length");
    std::vector<double> values(static_cast<std::size_t>(length));
    for (double& v : values) v = get_le<double>(in);
    arrays.push_back(std::move(values));
  }

  const GridGeometry& g = h.geometry;
  const auto dim = static_cast<std::size_t>(g.num_patches()) * static_cast<std::size_t>(g.patch_dim());
  switch (h.kind) {
    case 0: {
      if (arrays.size() != 1) throw Error(ErrorCode::kFormat, "attention model needs one array");
      return ReconstructorModel(AttentionModel(g, h.attention, std::move(arrays[0])));
    }
    case 1: {
      if (arrays.size() != 2) throw Error(ErrorCode::kFormat, "pca model needs two arrays");
      expect_length(arrays[0], dim, "pca mean");
      expect_length(arrays[1], dim * h.rank, "pca basis");
      PcaModel pca;
      pca.geometry = g;
      pca.rank = static_cast<int>(h.rank);
      pca.mean = Eigen::Map<const Eigen::VectorXd>(arrays[0].data(), static_cast<Eigen::Index>(dim));
      pca.basis = Eigen::Map<const Eigen::MatrixXd>(arrays[1].data(), static_cast<Eigen::Index>(dim), pca.rank);
      return ReconstructorModel(std::move(pca));
    }
    case 2: {
      if (arrays.size() != 1) throw Error(ErrorCode::kFormat, "positional-mean model needs one array");
      expect_length(arrays[0], dim, "positional means");
      PositionalMeanModel pm;
      pm.geometry = g;
      pm.means.resize(g.num_patches(), g.patch_dim());
      for (Eigen::Index r = 0; r < pm.means.rows(); ++r) {
        for (Eigen::Index c = 0; c < pm.means.cols(); ++c) {
          pm.means(r, c) = arrays[0][static_cast<std::size_t>(r * pm.means.cols() + c)];
        }
      }
      return ReconstructorModel(std::move(pm));
    }
    default:
      throw Error(ErrorCode::kFormat, "unknown model kind " + std::to_string(h.kind));
  }
}

nlohmann::json model_header_json(const ReconstructorModel& model) {
  const Header h = header_of(model);
  nlohmann::json arrays = nlohmann::json::array();
  const char* names[3][2] = {{"parameters", nullptr}, {"mean", "basis"}, {"means", nullptr}};
  const auto data = arrays_of(model);
  for (std::size_t a = 0; a < data.size(); ++a) {
    arrays.push_back({{"name", names[h.kind][a]}, {"length", data[a].size()}});
  }
  return {{"format", "ANOSUPS1"},
          {"version", kVersion},
          {"kind", kind_name(model.kind())},
          {"patch_size", h.geometry.patch_size},
          {"channels", h.geometry.channels},
          {"rows", h.geometry.rows},
          {"cols", h.geometry.cols},
          {"embed_dim", h.attention.embed_dim},
          {"heads", h.attention.heads},
          {"blocks", h.attention.blocks},
          {"mlp_ratio", h.attention.mlp_ratio},
          {"rank", h.rank},
          {"arrays", arrays}};
}

}  // namespace anosups
