#pragma once

#include <cstdint>
#include <vector>

#include "diffbp/errors.hpp"

namespace diffbp {

// Sample Pearson correlation: covariance over the product of standard
// deviations, population-normalized (the 1/n factors cancel). Inputs of zero
// variance raise DegenerateInputError rather than producing NaN.
double pcc(const std::vector<double>& y, const std::vector<double>& yhat);

// Mean absolute error, (1/n) sum |y_i - yhat_i|.
double mae(const std::vector<double>& y, const std::vector<double>& yhat);

struct FoldSplit {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;  // per-sample fold index in [0, k)

    std::vector<std::size_t> fold_indices(std::size_t fold) const;
    std::vector<std::size_t> train_indices(std::size_t fold) const;
    std::vector<std::size_t> fold_sizes() const;
};

// Seeded shuffle followed by contiguous chunking; the first n % k folds take
// the extra sample. Deterministic from (n, k, seed).
FoldSplit kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

// Wraps an externally supplied assignment (official protocol files).
FoldSplit folds_from_assignments(std::vector<std::size_t> assignments, std::size_t k);

}  // namespace diffbp
