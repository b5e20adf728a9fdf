#include "diffbp/eval.hpp"

#include <cstdio>

namespace diffbp {

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

FoldScore score_fold(const DiTModel& encoder, const RegressionHead& head, const std::vector<LabeledSample>& data,
                     const std::vector<std::size_t>& test_idx, std::size_t t_feat, bool clamp) {
    std::vector<double> y, yhat;
    y.reserve(test_idx.size());
    yhat.reserve(test_idx.size());
    for (std::size_t i : test_idx) {
        y.push_back(data[i].score);
        yhat.push_back(predict(encoder, head, data[i].image, t_feat, clamp));
    }
    return {pcc(y, yhat), mae(y, yhat)};
}

std::vector<LabeledSample> gather_samples(const std::vector<LabeledSample>& data,
                                          const std::vector<std::size_t>& idx) {
    std::vector<LabeledSample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(data[i]);
    return out;
}

}  // namespace

void EvalReport::finalize() {
    double sp = 0, sm = 0;
    for (const FoldScore& f : folds) {
        sp += f.pcc;
        sm += f.mae;
    }
    mean_pcc = sp / static_cast<double>(folds.size());
    mean_mae = sm / static_cast<double>(folds.size());
}

void EvalReport::write_csv(std::ostream& os) const {
    os << "fold,pcc,mae\n";
    for (std::size_t f = 0; f < folds.size(); ++f)
        os << f << "," << fmt(folds[f].pcc) << "," << fmt(folds[f].mae) << "\n";
    os << "mean," << fmt(mean_pcc) << "," << fmt(mean_mae) << "\n";
}

EvalReport cross_validate(const DiTModel& frozen_encoder, const std::vector<LabeledSample>& data, std::size_t k,
                          std::uint64_t seed, const RunConfig& cfg, const FoldSplit* external_folds) {
    if (!frozen_encoder.frozen) throw ContractError("cross_validate requires a frozen encoder");
    if (data.empty()) throw ValidationError("cross_validate: no labeled samples");
    const FoldSplit folds = external_folds ? *external_folds : kfold_split(data.size(), k, seed);
    if (external_folds && folds.assignments.size() != data.size())
        throw ValidationError("external fold assignment covers " + std::to_string(folds.assignments.size()) +
                              " samples, dataset has " + std::to_string(data.size()));

    EvalReport report;
    report.seed = seed;
    report.config_fingerprint = cfg.fingerprint();
    for (std::size_t f = 0; f < folds.k; ++f) {
        HeadTrainConfig hcfg;
        hcfg.lr = cfg.eval.head_lr;
        hcfg.weight_decay = cfg.eval.head_weight_decay;
        hcfg.steps = cfg.eval.head_steps;
        hcfg.batch = cfg.eval.head_batch;
        hcfg.seed = derive_rng(seed, RngDomain::fold, f).state();
        hcfg.t_feat = cfg.feature.t_feat;
        const std::vector<LabeledSample> train = gather_samples(data, folds.train_indices(f));
        FinetuneResult ft = finetune_head(frozen_encoder, train, hcfg);
        report.folds.push_back(
            score_fold(frozen_encoder, ft.head, data, folds.fold_indices(f), cfg.feature.t_feat, cfg.eval.clamp));
    }
    report.finalize();
    return report;
}

AblationVariant parse_variant(const std::string& name) {
    if (name == "scratch-frozen-encoder") return AblationVariant::scratch_frozen_encoder;
    if (name == "scratch-end-to-end-head-only") return AblationVariant::scratch_end_to_end;
    if (name == "generative-pretrained") return AblationVariant::generative_pretrained;
    throw ValidationError("unknown ablation variant '" + name +
                          "' (expected scratch-frozen-encoder, scratch-end-to-end-head-only, or "
                          "generative-pretrained)");
}

const char* variant_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::scratch_frozen_encoder: return "scratch-frozen-encoder";
        case AblationVariant::scratch_end_to_end: return "scratch-end-to-end-head-only";
        case AblationVariant::generative_pretrained: return "generative-pretrained";
    }
    return "?";
}

const char* variant_label(AblationVariant v) {
    switch (v) {
        case AblationVariant::scratch_frozen_encoder: return "Scratch encoder, frozen + head";
        case AblationVariant::scratch_end_to_end: return "Scratch, end-to-end, head output";
        case AblationVariant::generative_pretrained: return "Generative pre-trained, frozen + head";
    }
    return "?";
}

std::vector<AblationRow> run_ablation(const std::vector<LabeledSample>& data, std::size_t k, std::uint64_t seed,
                                      const std::vector<AblationVariant>& variants, const RunConfig& cfg,
                                      const DiTModel* pretrained_frozen) {
    if (data.empty()) throw ValidationError("run_ablation: no labeled samples");
    const FoldSplit folds = kfold_split(data.size(), k, seed);  // shared across variants

    std::vector<AblationRow> rows;
    for (AblationVariant v : variants) {
        switch (v) {
            case AblationVariant::scratch_frozen_encoder: {
                DiffusionRng init_rng = derive_rng(seed, RngDomain::init);
                DiTModel scratch = init_dit<float>(cfg.model, init_rng);
                freeze(scratch);
                rows.push_back({v, cross_validate(scratch, data, k, seed, cfg, &folds)});
                break;
            }
            case AblationVariant::generative_pretrained: {
                if (!pretrained_frozen || !pretrained_frozen->frozen)
                    throw ContractError("generative-pretrained variant needs a frozen pre-trained encoder");
                rows.push_back({v, cross_validate(*pretrained_frozen, data, k, seed, cfg, &folds)});
                break;
            }
            case AblationVariant::scratch_end_to_end: {
                EvalReport report;
                report.seed = seed;
                report.config_fingerprint = cfg.fingerprint();
                for (std::size_t f = 0; f < folds.k; ++f) {
                    EndToEndConfig ecfg;
                    ecfg.lr = cfg.eval.e2e_lr;
                    ecfg.steps = cfg.eval.e2e_steps;
                    ecfg.batch = cfg.eval.head_batch;
                    ecfg.seed = derive_rng(seed, RngDomain::fold, f).state();
                    ecfg.t_feat = cfg.feature.t_feat;
                    auto [model, head] =
                        finetune_end_to_end(cfg.model, gather_samples(data, folds.train_indices(f)), ecfg);
                    freeze(model);
                    std::vector<double> y, yhat;
                    for (std::size_t i : folds.fold_indices(f)) {
                        y.push_back(data[i].score);
                        yhat.push_back(predict(model, head, data[i].image, cfg.feature.t_feat, cfg.eval.clamp));
                    }
                    report.folds.push_back({pcc(y, yhat), mae(y, yhat)});
                }
                report.finalize();
                rows.push_back({v, std::move(report)});
                break;
            }
        }
    }
    return rows;
}

std::string render_comparison_table(const std::vector<TableRow>& rows) {
    std::size_t label_w = std::string("Model Configuration").size();
    for (const TableRow& r : rows) label_w = std::max(label_w, r.label.size());

    auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("--"); };

    std::string out;
    out += "Model Configuration" + std::string(label_w - 19, ' ') + "  PCC↑     MAE↓\n";
    out += std::string(label_w + 20, '-') + "\n";
    for (const TableRow& r : rows) {
        out += r.label + std::string(label_w - r.label.size(), ' ');
        const std::string p = cell(r.pcc), m = cell(r.mae);
        out += "  " + p + std::string(p.size() < 8 ? 8 - p.size() : 0, ' ');
        out += "  " + m + "\n";
    }
    return out;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& os) {
    os << "variant,fold,pcc,mae\n";
    for (const AblationRow& row : rows) {
        for (std::size_t f = 0; f < row.report.folds.size(); ++f)
            os << variant_name(row.variant) << "," << f << "," << fmt(row.report.folds[f].pcc) << ","
               << fmt(row.report.folds[f].mae) << "\n";
        os << variant_name(row.variant) << ",mean," << fmt(row.report.mean_pcc) << "," << fmt(row.report.mean_mae)
           << "\n";
    }
}

}  // namespace diffbp
