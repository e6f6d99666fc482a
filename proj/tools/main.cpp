// Command-line front end: synthetic data generation, preprocessing,
// training, cotraining, prediction (with mirror TTA and ensembling), region
// decoding, enhancing-tumor postprocessing, and cohort evaluation.
//
// Every command writes the fully resolved configuration next to its outputs
// so a run can be reproduced from its artifacts alone. Errors come back as a
// single "error: ..." line on stderr with a nonzero exit code.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vseg/config.hpp"
#include "vseg/errors.hpp"
#include "vseg/inference.hpp"
#include "vseg/metrics.hpp"
#include "vseg/regions.hpp"
#include "vseg/synth.hpp"
#include "vseg/textio.hpp"
#include "vseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

constexpr const char* kVersion = "vseg 1.0";

// The desk default: the full-scale network shape with the standard
// four-class softmax head. Config files and --set override from here.
Settings cli_defaults() {
    Settings s;
    s.model.num_classes = 4;
    return s;
}

std::vector<Case> load_manifest_cases(const std::string& manifest) {
    std::vector<Case> cases;
    for (const auto& d : read_manifest(manifest)) cases.push_back(load_case(d));
    if (cases.empty()) throw ContractError(manifest + ": manifest lists no cases");
    return cases;
}

// ids of files named <id><suffix> directly under dir, sorted for determinism
std::vector<std::string> ids_with_suffix(const std::string& dir, const std::string& suffix) {
    if (!fs::is_directory(dir)) throw ParseError(dir + ": not a directory");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void write_run_config(const KeyValues& kv, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_keyvalues(kv, (fs::path(out_dir) / "run_config.txt").string());
}

Settings resolve_settings(const std::string& config_path,
                          const std::vector<std::string>& overrides, bool seed_given,
                          std::uint64_t seed, bool workers_given, int workers) {
    Settings s = cli_defaults();
    if (!config_path.empty()) apply_settings(s, read_keyvalues(config_path));
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(s, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed_given) s.train.seed = seed;
    if (workers_given) s.train.workers = workers;
    return s;
}

EpochCallback progress_printer() {
    return [](const EpochLog& row, UNet<float>&) {
        std::cout << "epoch " << row.epoch << "  train " << fmt_double(row.train_loss)
                  << "  val " << fmt_double(row.val_loss) << "  ema " << fmt_double(row.ema)
                  << "  lr " << fmt_double(row.lr) << '\n';
        return false;
    };
}

// ---- subcommand bodies -----------------------------------------------------

struct SynthArgs {
    std::string out;
    SynthConfig cfg;
};

int run_synth(const SynthArgs& a) {
    const std::vector<Case> cohort = synth_cohort(a.cfg);
    fs::create_directories(a.out);
    std::vector<CaseDescriptor> descriptors;
    descriptors.reserve(cohort.size());
    for (const Case& c : cohort) descriptors.push_back(store_case(c, a.out));
    const std::string manifest = (fs::path(a.out) / "manifest.tsv").string();
    write_manifest(descriptors, manifest);

    KeyValues kv{{"command", "synth-data"},
                 {"synth.cases", std::to_string(a.cfg.n_cases)},
                 {"synth.size", std::to_string(a.cfg.size)},
                 {"synth.no_enhancing_fraction", fmt_double(a.cfg.no_enhancing_fraction)},
                 {"synth.seed", std::to_string(a.cfg.seed)},
                 {"synth.dataset_tag", std::to_string(a.cfg.dataset_tag)}};
    write_run_config(kv, a.out);
    std::cout << "wrote " << cohort.size() << " cases and " << manifest << '\n';
    return 0;
}

struct PreprocessArgs {
    std::string manifest, out;
};

int run_preprocess(const PreprocessArgs& a) {
    fs::create_directories(a.out);
    std::vector<CaseDescriptor> descriptors;
    for (const auto& d : read_manifest(a.manifest)) {
        Case c = load_case(d);
        normalize_case(c);
        descriptors.push_back(store_case(c, a.out));
    }
    const std::string manifest = (fs::path(a.out) / "manifest.tsv").string();
    write_manifest(descriptors, manifest);
    write_run_config({{"command", "preprocess"}, {"preprocess.manifest", a.manifest}}, a.out);
    std::cout << "normalized " << descriptors.size() << " cases into " << a.out << '\n';
    return 0;
}

struct TrainArgs {
    std::string train_manifest, val_manifest, out, config;
    std::vector<std::string> overrides;
    bool seed_given = false, workers_given = false;
    std::uint64_t seed = 0;
    int workers = 1;
};

int run_train(const TrainArgs& a) {
    const Settings s = resolve_settings(a.config, a.overrides, a.seed_given, a.seed,
                                        a.workers_given, a.workers);
    UNet<float> net = UNet<float>::build(s.model, s.train.seed);
    const auto train_cases = load_manifest_cases(a.train_manifest);
    const auto val_cases = load_manifest_cases(a.val_manifest);
    write_run_config(settings_to_keyvalues(s), a.out);

    const TrainResult res = train(net, train_cases, val_cases, s.train, a.out, progress_printer());
    std::cout << "finished after " << res.log.size() << " epochs (" << res.steps
              << " steps); best epoch " << res.best_epoch << '\n'
              << "checkpoints: " << res.best_path << ", " << res.final_path << '\n';
    return 0;
}

struct CotrainArgs {
    std::string train_a, train_b, val_a, val_b, out, config;
    std::vector<std::string> overrides;
    bool seed_given = false, workers_given = false;
    std::uint64_t seed = 0;
    int workers = 1;
};

int run_cotrain(const CotrainArgs& a) {
    Settings s = resolve_settings(a.config, a.overrides, a.seed_given, a.seed, a.workers_given,
                                  a.workers);
    s.model.num_heads = 2; // cotraining is defined for exactly two heads
    UNet<float> net = UNet<float>::build(s.model, s.train.seed);
    const auto ta = load_manifest_cases(a.train_a);
    const auto tb = load_manifest_cases(a.train_b);
    const auto va = load_manifest_cases(a.val_a);
    const auto vb = load_manifest_cases(a.val_b);
    write_run_config(settings_to_keyvalues(s), a.out);

    const TrainResult res = cotrain(net, ta, tb, va, vb, s.train, a.out, progress_printer());
    std::cout << "finished after " << res.log.size() << " epochs (" << res.steps
              << " steps); best epoch " << res.best_epoch << '\n'
              << "checkpoints: " << res.best_path << ", " << res.final_path << '\n';
    return 0;
}

struct PredictArgs {
    std::string manifest, out;
    std::vector<std::string> checkpoints;
    bool tta = false;
    int head = 0;
    std::uint64_t budget_mb = kDefaultMemoryBudget >> 20;
};

int run_predict(const PredictArgs& a) {
    std::vector<Checkpoint> nets;
    nets.reserve(a.checkpoints.size());
    for (const std::string& path : a.checkpoints) nets.push_back(load_checkpoint(path));
    const std::uint64_t budget = a.budget_mb << 20;

    fs::create_directories(a.out);
    int n = 0;
    for (const auto& d : read_manifest(a.manifest)) {
        const Case c = load_case(d);
        std::vector<Prediction> members;
        members.reserve(nets.size());
        for (std::size_t k = 0; k < nets.size(); ++k) {
            Prediction p = a.tta ? predict_tta(nets[k].net, c, a.head, budget)
                                 : predict_volume(nets[k].net, c, a.head, budget);
            for (std::string& prov : p.provenance)
                prov = "ckpt=" + a.checkpoints[k] + " " + prov;
            members.push_back(std::move(p));
        }
        const Prediction final_pred = members.size() == 1 ? members[0] : ensemble(members);
        write_prediction(final_pred, a.out);
        ++n;
    }

    KeyValues kv{{"command", "predict"},
                 {"predict.manifest", a.manifest},
                 {"predict.tta", a.tta ? "1" : "0"},
                 {"predict.head", std::to_string(a.head)},
                 {"predict.memory_budget_mb", std::to_string(a.budget_mb)}};
    for (std::size_t k = 0; k < a.checkpoints.size(); ++k)
        kv.emplace_back("predict.checkpoint" + std::to_string(k), a.checkpoints[k]);
    write_run_config(kv, a.out);
    std::cout << "predicted " << n << " cases into " << a.out << '\n';
    return 0;
}

struct DecodeArgs {
    std::string pred_dir, out;
    double threshold = 0.5;
};

int run_decode(const DecodeArgs& a) {
    const auto ids = ids_with_suffix(a.pred_dir, "_pred.txt");
    if (ids.empty()) throw ContractError(a.pred_dir + ": no predictions found");
    fs::create_directories(a.out);
    for (const std::string& id : ids) {
        const Prediction p = read_prediction(a.pred_dir, id);
        const LabelVolume lab = predicted_labels(p, static_cast<float>(a.threshold));
        write_labels(lab, (fs::path(a.out) / (id + "_seg.vseg")).string());
    }
    write_run_config({{"command", "decode-regions"},
                      {"decode.pred_dir", a.pred_dir},
                      {"decode.threshold", fmt_double(a.threshold)}},
                     a.out);
    std::cout << "decoded " << ids.size() << " cases into " << a.out << '\n';
    return 0;
}

struct PostprocessArgs {
    std::string labels_dir, out, rule_file, reference_manifest;
    bool optimize = false;
};

int run_postprocess(const PostprocessArgs& a) {
    const auto ids = ids_with_suffix(a.labels_dir, "_seg.vseg");
    if (ids.empty()) throw ContractError(a.labels_dir + ": no label volumes found");
    std::vector<LabelVolume> preds;
    preds.reserve(ids.size());
    for (const std::string& id : ids)
        preds.push_back(read_labels((fs::path(a.labels_dir) / (id + "_seg.vseg")).string()));

    PostprocessRule rule;
    std::string mode;
    if (a.optimize) {
        std::map<std::string, LabelVolume> refs;
        for (const auto& d : read_manifest(a.reference_manifest)) {
            if (d.label_path.empty()) continue;
            refs.emplace(d.id, load_case(d).label.value());
        }
        std::vector<LabelVolume> aligned;
        aligned.reserve(ids.size());
        for (const std::string& id : ids) {
            const auto it = refs.find(id);
            if (it == refs.end())
                throw ContractError("no reference labels for case " + id + " in " +
                                    a.reference_manifest);
            aligned.push_back(it->second);
        }
        rule = optimize_threshold(preds, aligned);
        mode = "optimized";
    } else {
        rule = read_rule(a.rule_file);
        mode = "rule-file";
    }

    fs::create_directories(a.out);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const LabelVolume adjusted = apply_et_rule(preds[i], rule);
        write_labels(adjusted, (fs::path(a.out) / (ids[i] + "_seg.vseg")).string());
    }
    write_rule(rule, (fs::path(a.out) / "et_rule.txt").string());
    write_run_config({{"command", "postprocess"},
                      {"postprocess.mode", mode},
                      {"postprocess.et_min_voxels", std::to_string(rule.et_min_voxels)}},
                     a.out);
    std::cout << "applied et_min_voxels=" << rule.et_min_voxels << " to " << ids.size()
              << " cases in " << a.out << '\n';
    return 0;
}

struct EvaluateArgs {
    std::string pred_dir, manifest, out;
};

int run_evaluate(const EvaluateArgs& a) {
    std::vector<std::string> ids;
    std::vector<LabelVolume> preds, refs;
    for (const auto& d : read_manifest(a.manifest)) {
        if (d.label_path.empty())
            throw ContractError("case " + d.id + " has no reference labels in " + a.manifest);
        const fs::path pred_path = fs::path(a.pred_dir) / (d.id + "_seg.vseg");
        if (!fs::exists(pred_path))
            throw ContractError("no prediction for case " + d.id + " under " + a.pred_dir);
        ids.push_back(d.id);
        preds.push_back(read_labels(pred_path.string()));
        refs.push_back(load_case(d).label.value());
    }

    const CohortReport report = evaluate_cohort(preds, refs, ids);
    fs::create_directories(a.out);
    const std::string report_path = (fs::path(a.out) / "report.tsv").string();
    write_report(report, report_path);
    write_run_config({{"command", "evaluate"},
                      {"evaluate.pred_dir", a.pred_dir},
                      {"evaluate.manifest", a.manifest}},
                     a.out);

    std::cout << "cases " << ids.size() << "  mean dice enh/whole/core " << fmt_double(report.mean.et.dice)
              << '/' << fmt_double(report.mean.wt.dice) << '/' << fmt_double(report.mean.tc.dice)
              << '\n'
              << "report: " << report_path << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"volumetric brain-tumor segmentation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion) + "\n" + metric_conventions());

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic labeled cohort");
    synth->add_option("--out", synth_args.out, "output directory")->required();
    synth->add_option("--cases", synth_args.cfg.n_cases, "number of cases");
    synth->add_option("--size", synth_args.cfg.size, "cubic volume edge, >= 16 voxels");
    synth->add_option("--no-enhancing-fraction", synth_args.cfg.no_enhancing_fraction,
                      "fraction of cases without enhancing tumor");
    synth->add_option("--seed", synth_args.cfg.seed, "cohort seed");
    synth->add_option("--tag", synth_args.cfg.dataset_tag, "dataset_tag for cotraining");

    PreprocessArgs pre_args;
    auto* pre = app.add_subcommand("preprocess", "normalize cases for training/prediction");
    pre->add_option("--manifest", pre_args.manifest, "input manifest")->required();
    pre->add_option("--out", pre_args.out, "output directory")->required();

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "train a net on one dataset");
    tr->add_option("--manifest", train_args.train_manifest, "training manifest")->required();
    tr->add_option("--val-manifest", train_args.val_manifest, "validation manifest")->required();
    tr->add_option("--out", train_args.out, "output directory")->required();
    tr->add_option("--config", train_args.config, "settings file (key=value lines)");
    tr->add_option("--set", train_args.overrides, "override one setting, key=value");
    auto* tr_seed = tr->add_option("--seed", train_args.seed, "training seed");
    auto* tr_workers = tr->add_option("--workers", train_args.workers, "batch producer threads");

    CotrainArgs co_args;
    auto* co = app.add_subcommand("cotrain", "train a two-headed net on two datasets");
    co->add_option("--manifest-a", co_args.train_a, "dataset A training manifest")->required();
    co->add_option("--manifest-b", co_args.train_b, "dataset B training manifest")->required();
    co->add_option("--val-manifest-a", co_args.val_a, "dataset A validation manifest")->required();
    co->add_option("--val-manifest-b", co_args.val_b, "dataset B validation manifest")->required();
    co->add_option("--out", co_args.out, "output directory")->required();
    co->add_option("--config", co_args.config, "settings file (key=value lines)");
    co->add_option("--set", co_args.overrides, "override one setting, key=value");
    auto* co_seed = co->add_option("--seed", co_args.seed, "training seed");
    auto* co_workers = co->add_option("--workers", co_args.workers, "batch producer threads");

    PredictArgs pred_args;
    auto* pr = app.add_subcommand("predict", "write probability maps for a manifest");
    pr->add_option("--manifest", pred_args.manifest, "input manifest")->required();
    pr->add_option("--checkpoint", pred_args.checkpoints, "checkpoint file (repeat to ensemble)")
        ->required();
    pr->add_option("--out", pred_args.out, "output directory")->required();
    pr->add_flag("--tta", pred_args.tta, "average the 8 mirror variants");
    pr->add_option("--head", pred_args.head, "head index");
    pr->add_option("--memory-budget-mb", pred_args.budget_mb, "activation budget per volume");

    DecodeArgs dec_args;
    auto* dec = app.add_subcommand("decode-regions", "turn probability maps into label volumes");
    dec->add_option("--pred-dir", dec_args.pred_dir, "directory of predictions")->required();
    dec->add_option("--out", dec_args.out, "output directory")->required();
    dec->add_option("--threshold", dec_args.threshold, "region probability gate");

    PostprocessArgs post_args;
    auto* post = app.add_subcommand("postprocess", "apply the small-enhancing-tumor rule");
    post->add_option("--labels-dir", post_args.labels_dir, "directory of label volumes")
        ->required();
    post->add_option("--out", post_args.out, "output directory")->required();
    post->add_flag("--optimize-threshold", post_args.optimize,
                   "fit et_min_voxels on reference labels");
    post->add_option("--reference-manifest", post_args.reference_manifest,
                     "labeled manifest for --optimize-threshold");
    post->add_option("--rule", post_args.rule_file, "existing rule file to apply");

    EvaluateArgs eval_args;
    auto* ev = app.add_subcommand("evaluate", "score label volumes against references");
    ev->add_option("--pred-dir", eval_args.pred_dir, "directory of predicted label volumes")
        ->required();
    ev->add_option("--manifest", eval_args.manifest, "labeled reference manifest")->required();
    ev->add_option("--out", eval_args.out, "output directory for the report")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return run_synth(synth_args);
        if (*pre) return run_preprocess(pre_args);
        if (*tr) {
            train_args.seed_given = tr_seed->count() > 0;
            train_args.workers_given = tr_workers->count() > 0;
            return run_train(train_args);
        }
        if (*co) {
            co_args.seed_given = co_seed->count() > 0;
            co_args.workers_given = co_workers->count() > 0;
            return run_cotrain(co_args);
        }
        if (*pr) return run_predict(pred_args);
        if (*dec) return run_decode(dec_args);
        if (*post) {
            if (post_args.optimize == !post_args.rule_file.empty())
                throw ConfigError(
                    "postprocess needs exactly one of --optimize-threshold or --rule");
            if (post_args.optimize && post_args.reference_manifest.empty())
                throw ConfigError("--optimize-threshold needs --reference-manifest");
            return run_postprocess(post_args);
        }
        if (*ev) return run_evaluate(eval_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
