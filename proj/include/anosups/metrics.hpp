#pragma once

#include <span>
#include <vector>

#include "anosups/image.hpp"

namespace anosups {

// 2|A n B| / (|A| + |B|); 1 when both masks are empty. Throws kShapeMismatch.
double dice(const BinaryMask& predicted, const BinaryMask& truth);

struct EvalResult {
  double dice = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
  double type1_rate = 0.0;  // fp / (fp + tn)
  double type2_rate = 0.0;  // fn / (fn + tp)
};

// Patch-level confusion of predicted vs ground-truth patch sets over m
// patches. The dice field is left at 0; callers fill it from pixel masks.
EvalResult patch_confusion(std::span<const int> predicted, std::span<const int> truth, int m);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for n < 2
};
MeanStd mean_std(std::span<const double> values);

}  // namespace anosups
