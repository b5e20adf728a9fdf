#include <cmath>
#include <set>

#include "doctest.h"

#include "diffbp/metrics.hpp"
#include "diffbp/rng.hpp"

using namespace diffbp;

namespace {

// Independent transliteration of the definitions: covariance of the two
// variables divided by the product of their standard deviations, and the
// average absolute difference. Deliberately two-pass and separate from the
// library implementation.
double pcc_reference(const std::vector<double>& y, const std::vector<double>& yh) {
    const double n = static_cast<double>(y.size());
    double my = 0, myh = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        my += y[i] / n;
        myh += yh[i] / n;
    }
    double cov = 0, vy = 0, vyh = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        cov += (y[i] - my) * (yh[i] - myh) / n;
        vy += (y[i] - my) * (y[i] - my) / n;
        vyh += (yh[i] - myh) * (yh[i] - myh) / n;
    }
    return cov / (std::sqrt(vy) * std::sqrt(vyh));
}

double mae_reference(const std::vector<double>& y, const std::vector<double>& yh) {
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - yh[i]);
    return acc / static_cast<double>(y.size());
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("pcc on exact linear relationships") {
        CHECK(pcc({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(pcc({1, 2, 3}, {6, 4, 2}) == doctest::Approx(-1.0).epsilon(1e-12));
    }

    TEST_CASE("pcc hand value 0.8") {
        CHECK(pcc({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
    }

    TEST_CASE("pcc degenerate input raises the typed error") {
        CHECK_THROWS_AS(pcc({2, 2, 2}, {1, 2, 3}), DegenerateInputError);
        CHECK_THROWS_AS(pcc({1, 2, 3}, {0.5, 0.5, 0.5}), DegenerateInputError);
        CHECK_THROWS_AS(pcc({1, 2}, {1}), ShapeError);
        CHECK_THROWS_AS(pcc({1}, {1}), ValidationError);
    }

    TEST_CASE("pcc affine invariance and symmetry properties") {
        DiffusionRng rng(12);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> y(16), z(16);
            for (double& v : y) v = rng.gaussian() * 2.0 + 1.0;
            for (double& v : z) v = rng.gaussian();
            double a = 0;
            while (std::abs(a) < 0.05) a = rng.gaussian();
            const double b = rng.gaussian() * 3.0;
            std::vector<double> affine(16);
            for (std::size_t i = 0; i < 16; ++i) affine[i] = a * y[i] + b;

            CHECK(pcc(y, affine) == doctest::Approx(a > 0 ? 1.0 : -1.0).epsilon(1e-9));
            CHECK(pcc(y, z) == doctest::Approx(pcc(z, y)).epsilon(1e-12));
            CHECK(std::abs(pcc(y, z)) <= 1.0 + 1e-12);
        }
    }

    TEST_CASE("mae basics") {
        CHECK(mae({1, 2, 3}, {1, 2, 3}) == 0.0);
        CHECK(mae({1, 2, 3}, {2, 2, 2}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK_THROWS_AS(mae({1, 2}, {1}), ShapeError);
        CHECK_THROWS_AS(mae({}, {}), ValidationError);
    }

    TEST_CASE("mae shift and triangle properties") {
        DiffusionRng rng(13);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> y(10), z(10), w(10);
            for (std::size_t i = 0; i < 10; ++i) {
                y[i] = rng.gaussian();
                z[i] = rng.gaussian();
                w[i] = rng.gaussian();
            }
            const double c = rng.gaussian() * 2.0;
            std::vector<double> shifted(10);
            for (std::size_t i = 0; i < 10; ++i) shifted[i] = y[i] + c;
            CHECK(mae(y, shifted) == doctest::Approx(std::abs(c)).epsilon(1e-12));
            CHECK(mae(y, z) <= mae(y, w) + mae(w, z) + 1e-12);
        }
    }

    TEST_CASE("both metrics match the independent oracle on random vectors") {
        DiffusionRng rng(14);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t n = 2 + rng.uniform_below(30);
            std::vector<double> y(n), yh(n);
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = rng.gaussian() * 1.5 + 3.0;
                yh[i] = y[i] * 0.5 + rng.gaussian();
            }
            CHECK(std::abs(pcc(y, yh) - pcc_reference(y, yh)) < 1e-12);
            CHECK(std::abs(mae(y, yh) - mae_reference(y, yh)) < 1e-12);
        }
    }

    TEST_CASE("kfold partitions with balanced sizes") {
        FoldSplit even = kfold_split(10, 5, 3);
        std::vector<std::size_t> sizes = even.fold_sizes();
        for (std::size_t s : sizes) CHECK(s == 2);

        FoldSplit odd = kfold_split(11, 5, 3);
        sizes = odd.fold_sizes();
        std::multiset<std::size_t> want = {3, 2, 2, 2, 2};
        CHECK(std::multiset<std::size_t>(sizes.begin(), sizes.end()) == want);

        // Partition: indices appear exactly once across folds.
        std::set<std::size_t> seen;
        for (std::size_t f = 0; f < 5; ++f)
            for (std::size_t i : odd.fold_indices(f)) CHECK(seen.insert(i).second);
        CHECK(seen.size() == 11);
    }

    TEST_CASE("kfold is deterministic per seed and validates inputs") {
        FoldSplit a = kfold_split(20, 4, 9);
        FoldSplit b = kfold_split(20, 4, 9);
        CHECK(a.assignments == b.assignments);
        FoldSplit c = kfold_split(20, 4, 10);
        CHECK(a.assignments != c.assignments);
        CHECK_THROWS_AS(kfold_split(3, 5, 0), ValidationError);
        CHECK_THROWS_AS(kfold_split(10, 1, 0), ValidationError);
    }

    TEST_CASE("external assignments are validated") {
        FoldSplit ok = folds_from_assignments({0, 1, 0, 1}, 2);
        CHECK(ok.fold_sizes() == std::vector<std::size_t>{2, 2});
        CHECK_THROWS_AS(folds_from_assignments({0, 3}, 2), ValidationError);
        CHECK_THROWS_AS(folds_from_assignments({0, 0, 0}, 2), ValidationError);
    }
}
