#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "diffbp/errors.hpp"
#include "diffbp/rng.hpp"
#include "diffbp/tensor.hpp"

namespace diffbp {

// Parameters of one rendered face. Bounds are part of the contract; the
// ground-truth score is a fixed smooth function of the normalized parameters.
struct SyntheticFaceParams {
    double eye_spacing = 0.34;     // [0.24, 0.44], fraction of image width
    double face_aspect = 0.95;     // [0.75, 1.10], ellipse width/height ratio
    double mouth_curvature = 0.0;  // [-1, 1], negative = frown
    double asymmetry = 0.0;        // [0, 0.3], offsets right-side features
    double texture_noise = 0.0;    // [0, 0.3], in-face speckle amplitude

    static constexpr double kEyeSpacingMin = 0.24, kEyeSpacingMax = 0.44;
    static constexpr double kFaceAspectMin = 0.75, kFaceAspectMax = 1.10;
    static constexpr double kMouthCurvMin = -1.0, kMouthCurvMax = 1.0;
    static constexpr double kAsymmetryMax = 0.3;
    static constexpr double kTextureMax = 0.3;
};

// Ground-truth beauty score in [1, 5]:
//   score = 1 + 4 * (0.5*(1 - asym/0.3) + 0.3*(1 - tex/0.3) + 0.2*(curv+1)/2)
// Monotone in symmetry and smoothness with a smile bonus; the optimum
// (asym = 0, tex = 0, curv = 1) scores exactly 5.
double synthetic_score(const SyntheticFaceParams& p);

struct UnlabeledSample {
    std::string id;
    Tensor image;  // HxWxC in [-1, 1]
};

struct LabeledSample {
    std::string id;
    Tensor image;
    double score = 0.0;  // [1, 5]
};

SyntheticFaceParams sample_face_params(DiffusionRng& rng);
Tensor render_face(const SyntheticFaceParams& p, std::size_t size, DiffusionRng& texture_rng);

// Deterministic per (n, size, seed); sample i depends only on (seed, i).
// label_noise > 0 adds Gaussian rating noise, clamped back into [1, 5].
std::vector<LabeledSample> generate_synthetic_corpus(std::size_t n, std::size_t size, std::uint64_t seed,
                                                     bool labeled, double label_noise = 0.0);

std::vector<SyntheticFaceParams> corpus_params(std::size_t n, std::uint64_t seed);

// --- raster / csv ingestion ---------------------------------------------

// 8-bit binary PGM (P5). Pixels map linearly to [-1, 1]: 0 -> -1, max -> 1.
void write_pgm(const Tensor& image, const std::string& path);
Tensor read_pgm(const std::string& path);

// Dispatch by extension: .pgm or .dfbp (single-tensor container).
Tensor read_image(const std::string& path);

// `path,score` with a header line. Malformed rows report their line number;
// scores outside [1, 5] are rejected.
std::vector<std::pair<std::string, double>> read_labels_csv(const std::string& path);

// Loads every sample named by the CSV; image paths resolve relative to the
// CSV's directory. Never silently skips: any unreadable file throws.
std::vector<LabeledSample> load_labeled_dataset(const std::string& labels_csv);

// All .pgm/.dfbp files in a directory, sorted by filename.
std::vector<UnlabeledSample> read_image_dir(const std::string& dir);

// `sample_id,fold` with a header line.
std::vector<std::pair<std::string, std::size_t>> read_folds_csv(const std::string& path);

}  // namespace diffbp
