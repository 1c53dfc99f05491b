#include "anosups/metrics.hpp"

#include <cmath>
#include <string>

#include "anosups/error.hpp"

namespace anosups {

double dice(const BinaryMask& predicted, const BinaryMask& truth) {
  if (predicted.height != truth.height || predicted.width != truth.width) {
    throw Error(ErrorCode::kShapeMismatch, "mask shapes differ");
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < predicted.data.size(); ++i) {
    const bool p = predicted.data[i] != 0;
    const bool t = truth.data[i] != 0;
    a += p;
    b += t;
    both += p && t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

EvalResult patch_confusion(std::span<const int> predicted, std::span<const int> truth, int m) {
  std::vector<std::uint8_t> pred(static_cast<std::size_t>(m), 0), gt(static_cast<std::size_t>(m), 0);
  auto mark = [m](std::span<const int> set, std::vector<std::uint8_t>& flags) {
    for (int i : set) {
      if (i < 0 || i >= m) throw Error(ErrorCode::kIndexOutOfRange, "patch index " + std::to_string(i));
      flags[static_cast<std::size_t>(i)] = 1;
    }
  };
  mark(predicted, pred);
  mark(truth, gt);
  EvalResult r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && gt[i]) ++r.tp;
    else if (pred[i]) ++r.fp;
    else if (gt[i]) ++r.fn;
    else ++r.tn;
  }
  r.type1_rate = r.fp + r.tn ? static_cast<double>(r.fp) / (r.fp + r.tn) : 0.0;
  r.type2_rate = r.fn + r.tp ? static_cast<double>(r.fn) / (r.fn + r.tp) : 0.0;
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

}  // namespace anosups
