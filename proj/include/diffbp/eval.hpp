#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "diffbp/config.hpp"
#include "diffbp/data.hpp"
#include "diffbp/dit.hpp"
#include "diffbp/head.hpp"
#include "diffbp/metrics.hpp"

namespace diffbp {

struct FoldScore {
    double pcc = 0;
    double mae = 0;
};

struct EvalReport {
    std::vector<FoldScore> folds;
    double mean_pcc = 0;
    double mean_mae = 0;
    std::string config_fingerprint;
    std::uint64_t seed = 0;

    // Aggregate = arithmetic mean over fold rows.
    void finalize();

    // `fold,pcc,mae` rows plus one aggregate row labelled "mean".
    void write_csv(std::ostream& os) const;
};

// Per fold: train a fresh head on the other folds, predict the held-out one,
// score with pcc/mae. Fold f trains with the rng stream (seed, fold, f).
EvalReport cross_validate(const DiTModel& frozen_encoder, const std::vector<LabeledSample>& data, std::size_t k,
                          std::uint64_t seed, const RunConfig& cfg, const FoldSplit* external_folds = nullptr);

enum class AblationVariant {
    scratch_frozen_encoder,
    scratch_end_to_end,
    generative_pretrained,
};

AblationVariant parse_variant(const std::string& name);
const char* variant_name(AblationVariant v);
const char* variant_label(AblationVariant v);

struct AblationRow {
    AblationVariant variant;
    EvalReport report;
};

// Runs every variant over the same fold assignment and seeds. The pretrained
// encoder is supplied by the caller (loaded or trained upstream); it is only
// required when the generative-pretrained variant is requested.
std::vector<AblationRow> run_ablation(const std::vector<LabeledSample>& data, std::size_t k, std::uint64_t seed,
                                      const std::vector<AblationVariant>& variants, const RunConfig& cfg,
                                      const DiTModel* pretrained_frozen);

// Aligned-text comparison table with PCC (higher better) and MAE (lower
// better) columns; absent cells render as "--".
struct TableRow {
    std::string label;
    std::optional<double> pcc;
    std::optional<double> mae;
};

std::string render_comparison_table(const std::vector<TableRow>& rows);

void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& os);

}  // namespace diffbp
