#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "diffbp/checkpoint.hpp"
#include "diffbp/config.hpp"
#include "diffbp/data.hpp"
#include "diffbp/diffusion.hpp"
#include "diffbp/eval.hpp"
#include "diffbp/head.hpp"
#include "diffbp/metrics.hpp"
#include "diffbp/train.hpp"

namespace fs = std::filesystem;
using namespace diffbp;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed_override) {
    RunConfig cfg = path.empty() ? RunConfig::from_json(nlohmann::json::object()) : RunConfig::load_file(path);
    if (seed_override) {
        cfg.train.seed = *seed_override;
        cfg.eval.seed = *seed_override;
    }
    return cfg;
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

nlohmann::json params_to_json(const SyntheticFaceParams& p) {
    return nlohmann::json{{"eye_spacing", p.eye_spacing},
                          {"face_aspect", p.face_aspect},
                          {"mouth_curvature", p.mouth_curvature},
                          {"asymmetry", p.asymmetry},
                          {"texture_noise", p.texture_noise}};
}

int cmd_synth(const std::string& out_dir, std::size_t n, std::size_t size, std::uint64_t seed, bool labeled) {
    fs::create_directories(out_dir);
    std::vector<LabeledSample> corpus = generate_synthetic_corpus(n, size, seed, labeled);
    std::vector<SyntheticFaceParams> params = corpus_params(n, seed);

    nlohmann::json manifest;
    manifest["seed"] = seed;
    manifest["n"] = n;
    manifest["size"] = size;
    manifest["labeled"] = labeled;
    manifest["samples"] = nlohmann::json::array();

    std::ofstream labels;
    if (labeled) {
        labels.open((fs::path(out_dir) / "labels.csv").string(), std::ios::trunc);
        labels << "path,score\n";
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        write_pgm(corpus[i].image, (fs::path(out_dir) / corpus[i].id).string());
        nlohmann::json entry{{"file", corpus[i].id}, {"params", params_to_json(params[i])}};
        if (labeled) {
            entry["score"] = corpus[i].score;
            labels << corpus[i].id << "," << fmt_double(corpus[i].score) << "\n";
        }
        manifest["samples"].push_back(entry);
    }
    std::ofstream mf((fs::path(out_dir) / "manifest.json").string(), std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    std::cout << "wrote " << n << " images to " << out_dir << (labeled ? " (labeled)" : "") << "\n";
    return 0;
}

std::vector<Tensor> images_only(const std::vector<UnlabeledSample>& samples) {
    std::vector<Tensor> out;
    out.reserve(samples.size());
    for (const UnlabeledSample& s : samples) out.push_back(s.image);
    return out;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& data_dir, const std::string& out_ckpt) {
    std::vector<UnlabeledSample> samples = read_image_dir(data_dir);
    PretrainResult result = pretrain(images_only(samples), cfg);
    save_checkpoint(result.checkpoint, out_ckpt);
    write_loss_trace(result.trace, out_ckpt + ".loss.csv");
    std::cout << "pretrained " << cfg.train.steps << " steps on " << samples.size() << " images; final loss "
              << fmt_double(result.trace.empty() ? 0.0 : result.trace.back().loss) << "\n";
    std::cout << "checkpoint: " << out_ckpt << "\n";
    return 0;
}

HeadTrainConfig head_config(const RunConfig& cfg) {
    HeadTrainConfig h;
    h.lr = cfg.eval.head_lr;
    h.weight_decay = cfg.eval.head_weight_decay;
    h.steps = cfg.eval.head_steps;
    h.batch = cfg.eval.head_batch;
    h.seed = cfg.eval.seed;
    h.t_feat = cfg.feature.t_feat;
    return h;
}

int cmd_finetune(const RunConfig& cfg, const std::string& ckpt_path, const std::string& labels_csv,
                 const std::string& out_head) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DiTModel encoder = model_from_checkpoint(ckpt);
    freeze(encoder);
    std::vector<LabeledSample> data = load_labeled_dataset(labels_csv);
    FinetuneResult r = finetune_head(encoder, data, head_config(cfg));
    save_head(r.head, out_head);
    std::cout << "trained head on " << data.size() << " samples; final mse "
              << fmt_double(r.trace.empty() ? 0.0 : r.trace.back().loss) << "\n";
    std::cout << "head: " << out_head << "\n";
    return 0;
}

std::optional<FoldSplit> external_folds(const RunConfig& cfg, const std::vector<LabeledSample>& data) {
    if (cfg.eval.folds_csv.empty()) return std::nullopt;
    std::vector<std::pair<std::string, std::size_t>> rows = read_folds_csv(cfg.eval.folds_csv);
    std::vector<std::size_t> assignments(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        bool found = false;
        for (const auto& [id, fold] : rows)
            if (id == data[i].id) {
                assignments[i] = fold;
                found = true;
                break;
            }
        if (!found) throw ValidationError("folds file has no entry for sample '" + data[i].id + "'");
    }
    return folds_from_assignments(std::move(assignments), cfg.eval.k);
}

int cmd_evaluate(const RunConfig& cfg, const std::string& ckpt_path, const std::string& labels_csv,
                 const std::string& out_csv) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DiTModel encoder = model_from_checkpoint(ckpt);
    freeze(encoder);
    std::vector<LabeledSample> data = load_labeled_dataset(labels_csv);
    std::optional<FoldSplit> folds = external_folds(cfg, data);
    EvalReport report = cross_validate(encoder, data, cfg.eval.k, cfg.eval.seed, cfg, folds ? &*folds : nullptr);

    std::ofstream f(out_csv, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + out_csv + "' for writing");
    report.write_csv(f);

    std::vector<TableRow> rows;
    for (std::size_t i = 0; i < report.folds.size(); ++i)
        rows.push_back({"fold " + std::to_string(i), report.folds[i].pcc, report.folds[i].mae});
    rows.push_back({"mean over folds", report.mean_pcc, report.mean_mae});
    std::cout << render_comparison_table(rows);
    std::cout << "config " << report.config_fingerprint << ", seed " << report.seed << "\n";
    return 0;
}

int cmd_ablation(const RunConfig& cfg, const std::string& labels_csv, const std::string& variants_arg,
                 const std::string& ckpt_path, const std::string& out_csv) {
    std::vector<AblationVariant> variants;
    std::string remaining = variants_arg;
    while (!remaining.empty()) {
        const std::size_t comma = remaining.find(',');
        variants.push_back(parse_variant(remaining.substr(0, comma)));
        remaining = comma == std::string::npos ? "" : remaining.substr(comma + 1);
    }
    if (variants.empty()) throw ValidationError("no ablation variants requested");

    std::vector<LabeledSample> data = load_labeled_dataset(labels_csv);

    bool needs_pretrained = false;
    for (AblationVariant v : variants)
        if (v == AblationVariant::generative_pretrained) needs_pretrained = true;

    DiTModel pretrained;
    if (needs_pretrained) {
        if (!ckpt_path.empty()) {
            pretrained = model_from_checkpoint(load_checkpoint(ckpt_path));
        } else {
            // Self-supervised phase on the same images with labels stripped.
            std::vector<Tensor> images;
            images.reserve(data.size());
            for (const LabeledSample& s : data) images.push_back(s.image);
            std::cout << "pretraining encoder for " << cfg.train.steps << " steps...\n";
            pretrained = pretrain(images, cfg).model;
        }
        freeze(pretrained);
    }

    std::vector<AblationRow> rows =
        run_ablation(data, cfg.eval.k, cfg.eval.seed, variants, cfg, needs_pretrained ? &pretrained : nullptr);

    if (!out_csv.empty()) {
        std::ofstream f(out_csv, std::ios::trunc);
        if (!f) throw IoError("cannot open '" + out_csv + "' for writing");
        write_ablation_csv(rows, f);
    }

    std::vector<TableRow> table;
    for (const AblationRow& row : rows)
        table.push_back({variant_label(row.variant), row.report.mean_pcc, row.report.mean_mae});
    std::cout << render_comparison_table(table);
    return 0;
}

int cmd_sample(const RunConfig& cfg, bool config_given, const std::string& ckpt_path, std::uint64_t seed,
               std::size_t steps, const std::string& out_pgm) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DiTModel model = model_from_checkpoint(ckpt);
    // Betas come from the config when given; the checkpoint pins T either way.
    if (config_given && cfg.schedule.timesteps != model.cfg.timesteps)
        throw ValidationError("config schedule T does not match the checkpoint's timestep range");
    NoiseSchedule s = build_schedule(model.cfg.timesteps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    if (steps == 0) steps = s.timesteps;

    if (model.cfg.channels != 1)
        throw ValidationError("PGM sampling output supports single-channel models only");
    DiffusionRng rng = derive_rng(seed, RngDomain::sample);
    Tensor image = ancestral_sample(model, s, rng, steps);
    write_pgm(image, out_pgm);
    std::cout << "sampled " << steps << " steps -> " << out_pgm << "\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
    const double tolerance = 1e-4;
    double worst = 0.0;
    auto report = [&](const std::string& name, double err) {
        worst = std::max(worst, err);
        std::cout << (err < tolerance ? "ok   " : "FAIL ") << name << "  max_rel_err=" << err << "\n";
    };

    // Op-level checks at generic points, 64-bit mode.
    DiffusionRng rng(20240915);
    {
        TensorT<double> x = TensorT<double>::gaussian({4, 6}, rng);
        TensorT<double> w = TensorT<double>::gaussian({6, 5}, rng, 0.5);
        TensorT<double> v = TensorT<double>::gaussian({5}, rng);
        auto f = [&] {
            TensorT<double> h = gelu(add_rowvec(matmul(x, w), v));
            TensorT<double> a = softmax(scalar_mul(matmul(h, transpose(h)), 0.3));
            return mean_all(mul(matmul(a, layer_norm(h)), h));
        };
        report("ops.matmul_input", grad_check(f, x));
        report("ops.matmul_weight", grad_check(f, w));
        report("ops.bias", grad_check(f, v));
    }
    {
        TensorT<double> x = TensorT<double>::gaussian({3, 8}, rng);
        TensorT<double> v = TensorT<double>::gaussian({8}, rng);
        auto f = [&] { return mean_all(relu(mul_rowvec(x, v))); };
        report("ops.relu_rowvec_x", grad_check(f, x));
        report("ops.relu_rowvec_v", grad_check(f, v));
    }

    // Whole-model check: every parameter group of the configured model at a
    // randomized point (the zero-init point has vanishing block gradients).
    DiTModelT<double> model = init_dit<double>(cfg.model, rng);
    randomize_parameters(model, rng, 0.2);
    NoiseSchedule schedule = build_schedule(cfg.schedule.timesteps, cfg.schedule.beta_start, cfg.schedule.beta_end);
    TensorT<double> x0 = TensorT<double>::gaussian({cfg.model.image_h, cfg.model.image_w, cfg.model.channels}, rng);
    TensorT<double> eps = TensorT<double>::gaussian(x0.shape(), rng);
    const std::size_t t = 1 + schedule.timesteps / 3;
    auto loss = [&] {
        return denoise_loss_given(
            [&](const TensorT<double>& xt, std::size_t tt) { return dit_forward(model, xt, tt); }, x0, t, eps,
            schedule);
    };
    for (auto& [name, param] : model.named_params()) report("model." + name, grad_check(loss, *param));

    if (worst >= tolerance) throw Error("gradient check failed: max relative error " + std::to_string(worst));
    std::cout << "all gradient checks passed (tolerance " << tolerance << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion-pretrained facial beauty prediction toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, labels_csv, ckpt_path, out_path, variants_arg;
    std::optional<std::uint64_t> seed_override;

    auto* synth = app.add_subcommand("synth", "generate a synthetic face corpus");
    std::size_t synth_n = 64, synth_size = 16;
    std::uint64_t synth_seed = 42;
    bool synth_labeled = false;
    synth->add_option("--out", out_path, "output directory")->required();
    synth->add_option("--n", synth_n, "number of images");
    synth->add_option("--size", synth_size, "image side length");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_flag("--labeled", synth_labeled, "also write labels.csv with ground-truth scores");

    auto* pre = app.add_subcommand("pretrain", "phase 1: denoising pre-training");
    pre->add_option("--config", config_path, "run config JSON");
    pre->add_option("--data", data_dir, "directory of .pgm/.dfbp images")->required();
    pre->add_option("--out", out_path, "output checkpoint path")->required();
    pre->add_option("--seed", seed_override, "override config seeds");

    auto* fin = app.add_subcommand("finetune", "phase 2: train the regression head");
    fin->add_option("--config", config_path, "run config JSON");
    fin->add_option("--ckpt", ckpt_path, "encoder checkpoint")->required();
    fin->add_option("--labels", labels_csv, "labels CSV (path,score)")->required();
    fin->add_option("--out", out_path, "output head path")->required();
    fin->add_option("--seed", seed_override, "override config seeds");

    auto* eval_cmd = app.add_subcommand("evaluate", "k-fold cross-validated PCC/MAE");
    eval_cmd->add_option("--config", config_path, "run config JSON");
    eval_cmd->add_option("--ckpt", ckpt_path, "encoder checkpoint")->required();
    eval_cmd->add_option("--labels", labels_csv, "labels CSV")->required();
    eval_cmd->add_option("--out", out_path, "report CSV path")->required();
    eval_cmd->add_option("--seed", seed_override, "override config seeds");

    auto* abl = app.add_subcommand("ablation", "compare pre-training strategies");
    abl->add_option("--config", config_path, "run config JSON");
    abl->add_option("--labels", labels_csv, "labels CSV")->required();
    abl->add_option("--variants", variants_arg, "comma list of variants")
        ->default_val("scratch-frozen-encoder,scratch-end-to-end-head-only,generative-pretrained");
    abl->add_option("--ckpt", ckpt_path, "reuse a pre-trained encoder checkpoint");
    abl->add_option("--out", out_path, "ablation CSV path");
    abl->add_option("--seed", seed_override, "override config seeds");

    auto* smp = app.add_subcommand("sample", "ancestral sampling to a PGM image");
    std::uint64_t sample_seed = 0;
    std::size_t sample_steps = 0;
    smp->add_option("--config", config_path, "run config JSON (for the beta schedule)");
    smp->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    smp->add_option("--seed", sample_seed, "sampling seed");
    smp->add_option("--steps", sample_steps, "reverse steps (default: full T)");
    smp->add_option("--out", out_path, "output PGM path")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--config", config_path, "run config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: usage: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        RunConfig cfg = load_config(config_path, seed_override);
        if (synth->parsed()) return cmd_synth(out_path, synth_n, synth_size, synth_seed, synth_labeled);
        if (pre->parsed()) return cmd_pretrain(cfg, data_dir, out_path);
        if (fin->parsed()) return cmd_finetune(cfg, ckpt_path, labels_csv, out_path);
        if (eval_cmd->parsed()) return cmd_evaluate(cfg, ckpt_path, labels_csv, out_path);
        if (abl->parsed()) return cmd_ablation(cfg, labels_csv, variants_arg, ckpt_path, out_path);
        if (smp->parsed())
            return cmd_sample(cfg, !config_path.empty(), ckpt_path, sample_seed, sample_steps, out_path);
        if (gc->parsed()) return cmd_gradcheck(cfg);
    } catch (const ValidationError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
