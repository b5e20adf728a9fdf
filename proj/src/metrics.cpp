#include "diffbp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "diffbp/rng.hpp"
#include "diffbp/train.hpp"

namespace diffbp {

double pcc(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size())
        throw ShapeError("pcc: length mismatch " + std::to_string(y.size()) + " vs " + std::to_string(yhat.size()));
    const std::size_t n = y.size();
    if (n < 2) throw ValidationError("pcc needs at least two samples");

    auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
    };
    if (constant(y) || constant(yhat))
        throw DegenerateInputError("pcc is undefined for zero-variance input");

    double mean_y = 0, mean_yh = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_y += y[i];
        mean_yh += yhat[i];
    }
    mean_y /= static_cast<double>(n);
    mean_yh /= static_cast<double>(n);

    double cov = 0, var_y = 0, var_yh = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dy = y[i] - mean_y;
        const double dyh = yhat[i] - mean_yh;
        cov += dy * dyh;
        var_y += dy * dy;
        var_yh += dyh * dyh;
    }
    const double denom = std::sqrt(var_y) * std::sqrt(var_yh);
    if (denom == 0.0) throw DegenerateInputError("pcc is undefined for zero-variance input");
    return cov / denom;
}

double mae(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size())
        throw ShapeError("mae: length mismatch " + std::to_string(y.size()) + " vs " + std::to_string(yhat.size()));
    if (y.empty()) throw ValidationError("mae needs at least one sample");
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - yhat[i]);
    return acc / static_cast<double>(y.size());
}

std::vector<std::size_t> FoldSplit::fold_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldSplit::train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] != fold) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldSplit::fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t f : assignments) ++sizes[f];
    return sizes;
}

FoldSplit kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("k-fold split needs k >= 2");
    if (n < k) throw ValidationError("k-fold split needs n >= k, got n=" + std::to_string(n) +
                                     ", k=" + std::to_string(k));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    DiffusionRng rng = derive_rng(seed, RngDomain::fold);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_below(i)]);

    FoldSplit split;
    split.k = k;
    split.assignments.resize(n);
    const std::size_t base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) split.assignments[order[pos++]] = f;
    }
    return split;
}

FoldSplit folds_from_assignments(std::vector<std::size_t> assignments, std::size_t k) {
    if (k < 2) throw ValidationError("k-fold split needs k >= 2");
    for (std::size_t f : assignments)
        if (f >= k) throw ValidationError("fold index " + std::to_string(f) + " outside [0, " + std::to_string(k) + ")");
    FoldSplit split;
    split.k = k;
    split.assignments = std::move(assignments);
    for (std::size_t f = 0; f < k; ++f)
        if (split.fold_indices(f).empty()) throw ValidationError("fold " + std::to_string(f) + " is empty");
    return split;
}

}  // namespace diffbp
