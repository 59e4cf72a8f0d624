// tgd: command-line front end for data generation, training, KSE reports and
// evaluation. Every run writes its outputs and a run_manifest.json into its own
// directory; `tgd replay` re-executes a manifest and checks the outputs match.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "tgd/config.hpp"
#include "tgd/dataset_io.hpp"
#include "tgd/tgd.hpp"

namespace fs = std::filesystem;
using namespace tgd;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr const char* kManifestName = "run_manifest.json";

enum Exit { ok = 0, failure = 1, config_error = 2, data_error = 3 };

// Inputs that load fine but cannot be used: empty splits, replay inputs that changed.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::string config;
    std::string out;
    std::string out_root = "runs";
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<double> phi;
    std::optional<bool> freeze_last_layer;
    std::string weights, dataset, study, rois;
    std::string manifest;  // replay only
};

// --- hashing and run bookkeeping ---

std::uint64_t tree_hash(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    Fnv1a h;
    for (const auto& f : files) {
        h.update(fs::relative(f, dir).generic_string());
        h.update_value(file_hash(f));
    }
    return h.digest();
}

std::string content_hash(const std::string& path) {
    if (!fs::exists(path)) throw FormatError(FormatError::Kind::io, "input not found: " + path);
    return hex_digest(fs::is_directory(path) ? tree_hash(path) : file_hash(path));
}

json output_entries(const fs::path& run_dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(run_dir)) {
        if (e.is_regular_file() && e.path().filename() != kManifestName) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    json out = json::array();
    for (const auto& f : files) {
        out.push_back({{"path", fs::relative(f, run_dir).generic_string()}, {"hash", hex_digest(file_hash(f))}});
    }
    return out;
}

std::string utc_stamp(const char* fmt) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, fmt);
    return s.str();
}

class Run {
public:
    Run(std::string subcommand, const Flags& flags, fs::path base)
        : subcommand_(std::move(subcommand)), flags_(flags), base_(std::move(base)) {}

    const std::string& subcommand() const { return subcommand_; }
    const fs::path& base() const { return base_; }
    const fs::path& dir() const { return dir_; }
    const json& config() const { return config_; }

    /// Records the effective config and creates the output directory.
    void open(json effective, json seeds) {
        config_ = std::move(effective);
        seeds_ = std::move(seeds);
        if (!flags_.out.empty()) {
            dir_ = flags_.out;
        } else {
            Fnv1a h;
            h.update(subcommand_);
            h.update(config_.dump());
            dir_ = fs::path(flags_.out_root) /
                   (utc_stamp("%Y%m%dT%H%M%SZ") + "-" + subcommand_ + "-" + hex_digest(h.digest()).substr(0, 8));
        }
        if (fs::exists(dir_) && !fs::is_empty(dir_)) throw ConfigError("output directory " + dir_.string() + " is not empty");
        fs::create_directories(dir_);
    }

    void input(const std::string& role, const std::string& path) {
        inputs_.push_back({{"role", role}, {"path", path}, {"hash", content_hash(path)}});
    }

    fs::path file(const std::string& name) const { return dir_ / name; }

    void finish(const json& extra = json::object()) const {
        json m{{"format", "tgd-run"},
               {"version", 1},
               {"tool", "tgd"},
               {"tool_version", kToolVersion},
               {"subcommand", subcommand_},
               {"created_utc", utc_stamp("%Y-%m-%dT%H:%M:%SZ")},
               {"run_dir", fs::absolute(dir_).lexically_normal().string()},
               {"config", config_},
               {"seeds", seeds_},
               {"inputs", inputs_},
               {"outputs", output_entries(dir_)}};
        for (const auto& [k, v] : extra.items()) m[k] = v;
        write_text(dir_ / kManifestName, m.dump(2) + "\n");
    }

private:
    std::string subcommand_;
    Flags flags_;
    fs::path base_;
    fs::path dir_;
    json config_;
    json seeds_ = json::object();
    json inputs_ = json::array();
};

// --- config loading and flag overrides ---

json load_config_file(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

void apply_overrides(json& j, const Flags& f) {
    if (!j.is_object()) throw ConfigError("config: '<root>' must be an object");
    auto training = [&]() -> json& {
        if (!j.contains("training") || !j["training"].is_object()) j["training"] = json::object();
        return j["training"];
    };
    if (f.epochs) training()["epochs"] = *f.epochs;
    if (f.seed) training()["seed"] = *f.seed;
    if (f.phi) training()["phi"] = *f.phi;
    if (f.freeze_last_layer) training()["last_layer_frozen"] = *f.freeze_last_layer;
    // paths given on the command line are relative to the working directory
    const auto abs = [](const std::string& p) { return fs::absolute(p).lexically_normal().string(); };
    if (!f.weights.empty()) j["weights"] = abs(f.weights);
    if (!f.dataset.empty()) j["dataset"] = abs(f.dataset);
    if (!f.study.empty()) j["study"] = abs(f.study);
    if (!f.rois.empty()) j["rois"] = abs(f.rois);
}

// --- output helpers ---

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string sci(double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(4) << v;
    return s.str();
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream s;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) s << "  ";
            s << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[c])) << cells[c];
        }
        s << '\n';
    };
    line(header);
    std::size_t total = 2 * (header.size() - 1);
    for (auto w : width) total += w;
    s << std::string(total, '-') << '\n';
    for (const auto& r : rows) line(r);
    return s.str();
}

void emit_table(const Run& run, const std::string& table) {
    std::cout << table;
    write_text(run.file("table.txt"), table);
}

std::string csv_number(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

TrainingSet concat_sets(const TrainingSet& a, const TrainingSet& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    const std::vector<Tensor<float>> inputs{a.inputs, b.inputs}, targets{a.targets, b.targets};
    return {concat_batch<float>(inputs), concat_batch<float>(targets)};
}

TrainingSet split_set(const Dataset& ds, const std::string& split, int slices) {
    if (split == "val") return make_training_set(ds, true, slices);
    if (split == "train") return make_training_set(ds, false, slices);
    return concat_sets(make_training_set(ds, false, slices), make_training_set(ds, true, slices));
}

// --- subcommands ---

void cmd_gen_data(Run& run, const json& raw) {
    const auto c = parse_gen_data(raw);
    json seeds{{"protocol", c.protocol.seed}};
    if (c.kind == "dataset") seeds["phantoms"] = c.phantom_seed;
    run.open(to_json(c), seeds);
    const fs::path data = run.file("data");
    if (c.kind == "dataset") {
        std::vector<PhantomSpec> specs;
        for (std::size_t i = 0; i < c.phantom_count; ++i) {
            specs.push_back(random_phantom_spec(c.phantom_seed + i, c.phantom_options));
        }
        const auto ds = build_dataset(specs, c.protocol, c.count_levels, c.validation_phantoms);
        save_dataset(ds, data);
        std::cout << "dataset: " << ds.phantoms.size() << " phantoms, " << ds.pair_count() << " pairs -> " << data.string()
                  << "\n";
    } else {
        const auto st = make_study(c.study_phantom, c.protocol, c.realizations, c.thin_p, c.noiseless);
        save_study(st, data);
        std::cout << "study: " << st.realizations.size() << " realizations -> " << data.string() << "\n";
    }
}

void write_training_outputs(const Run& run, const Network<float>& net, const TrainRecord& record,
                            const MaskSet* masks, const KseReport* kse) {
    save_weights(net, run.file("weights.tgdw").string());
    write_text(run.file("train_log.jsonl"), train_record_jsonl(record));
    if (masks) write_text(run.file("masks.json"), to_json(*masks).dump(2) + "\n");
    if (kse) write_text(run.file("kse_report.json"), to_json(*kse).dump(2) + "\n");
    std::cout << to_string(record.config.mode) << ": " << record.epochs.size() << " epochs, loss "
              << sci(record.initial_loss()) << " -> " << sci(record.final_loss());
    if (record.validation_mse) std::cout << ", validation MSE " << sci(*record.validation_mse);
    if (masks) std::cout << ", retrained channels " << masks->retrained_channels();
    std::cout << "\nweights " << hex_digest(record.initial_hash) << " -> " << hex_digest(record.final_hash) << "\n";
}

void cmd_train(Run& run, const json& raw, TrainMode mode) {
    const auto c = parse_train_run(raw, mode, run.base());
    run.open(to_json(c), json{{"training", c.train.seed}});
    if (!c.weights.empty()) run.input("weights", c.weights);
    run.input(mode == TrainMode::n2n_online ? "study" : "dataset", mode == TrainMode::n2n_online ? c.study : c.dataset);

    std::optional<Network<float>> start;
    if (mode != TrainMode::scratch) start = load_weights(c.weights, c.network_given ? &c.train.network : nullptr);
    auto cfg = c.train;
    if (start) cfg.network = start->config;
    cfg.validate();

    if (mode == TrainMode::n2n_online) {
        const auto st = load_study(c.study);
        const auto kse = kse_scores(*start, cfg.kse);
        const auto res = online_n2n(*start, cfg, st.half1, st.half2);
        write_training_outputs(run, res.net, res.record, &res.masks, &kse);
        write_raw_f32(run.file("denoised_realization0.f32"), denoise_volume(res.net, st.realizations.front()));
        return;
    }

    const auto ds = load_dataset(c.dataset);
    const int slices = cfg.network.input_slices;
    const auto train = make_training_set(ds, false, slices);
    const auto val = make_training_set(ds, true, slices);
    if (train.size() == 0) throw DataError("dataset " + c.dataset + " has no training phantoms");
    const TrainingSet* v = val.size() ? &val : nullptr;
    if (mode == TrainMode::scratch) {
        const auto res = train_scratch(cfg, train, v);
        write_training_outputs(run, res.net, res.record, nullptr, nullptr);
    } else {
        const auto kse = kse_scores(*start, cfg.kse);
        const auto res = finetune_tgd(*start, cfg, train, v);
        write_training_outputs(run, res.net, res.record, &res.masks, &kse);
    }
}

void cmd_kse_report(Run& run, const json& raw) {
    const auto c = parse_kse_report(raw, run.base());
    run.open(to_json(c), json::object());
    run.input("weights", c.weights);
    const auto net = load_weights(c.weights);
    const auto report = kse_scores(net, c.kse);
    write_text(run.file("kse_report.json"), to_json(report).dump(2) + "\n");

    std::string csv = "phi,dropped_params,total_params,dropped_fraction\n";
    std::vector<std::vector<std::string>> rows;
    for (double phi : c.phis) {
        const auto d = drop_kernels(net, report, phi);
        csv += csv_number(phi) + "," + std::to_string(d.dropped_params) + "," + std::to_string(d.total_params) + "," +
               csv_number(d.dropped_fraction()) + "\n";
        rows.push_back({fixed(phi, 2), std::to_string(d.dropped_params), std::to_string(d.total_params),
                        fixed(100.0 * d.dropped_fraction(), 2)});
    }
    write_text(run.file("sweep.csv"), csv);
    emit_table(run, render_table({"phi", "dropped", "total", "dropped (%)"}, rows));
}

void cmd_prune_eval(Run& run, const json& raw) {
    const auto c = parse_prune_eval(raw, run.base());
    run.open(to_json(c), json::object());
    run.input("weights", c.weights);
    run.input("dataset", c.dataset);
    const auto net = load_weights(c.weights);
    const auto set = split_set(load_dataset(c.dataset), c.split, net.config.input_slices);
    if (set.size() == 0) throw DataError("dataset " + c.dataset + " has no phantoms in split '" + c.split + "'");

    // the unpruned network's own output is the reference
    TrainingSet reference{set.inputs, forward(net, set.inputs, Mode::infer)};
    const auto report = kse_scores(net, c.kse);
    json results = json::array();
    std::string csv = "phi,dropped_fraction,mse_to_reference,mse_to_target\n";
    std::vector<std::vector<std::string>> rows;
    for (double phi : c.phis) {
        const auto d = drop_kernels(net, report, phi);
        const double to_ref = evaluate_mse(d.net, reference), to_target = evaluate_mse(d.net, set);
        results.push_back({{"phi", phi},
                           {"dropped_params", d.dropped_params},
                           {"total_params", d.total_params},
                           {"dropped_fraction", d.dropped_fraction()},
                           {"mse_to_reference", to_ref},
                           {"mse_to_target", to_target}});
        csv += csv_number(phi) + "," + csv_number(d.dropped_fraction()) + "," + csv_number(to_ref) + "," +
               csv_number(to_target) + "\n";
        rows.push_back({fixed(phi, 2), fixed(100.0 * d.dropped_fraction(), 2), sci(to_ref), sci(to_target)});
    }
    const json doc{{"format", "tgd-prune-eval"},
                   {"version", 1},
                   {"source_hash", hex_digest(network_hash(net))},
                   {"samples", set.size()},
                   {"unpruned_mse_to_target", evaluate_mse(net, set)},
                   {"results", results}};
    write_text(run.file("prune_eval.json"), doc.dump(2) + "\n");
    write_text(run.file("prune_eval.csv"), csv);
    emit_table(run, render_table({"phi", "dropped (%)", "MSE to reference", "MSE to target"}, rows));
}

struct StackMetrics {
    json lesions = json::array();
    std::optional<double> mean_bias;
    std::optional<double> cov;
    std::string cov_note;
    double mse_to_truth = 0.0;
    json structures = json::array();
};

StackMetrics stack_metrics(const std::vector<Tensor<float>>& stack, const Tensor<float>& truth, const std::vector<Roi>& rois) {
    StackMetrics m;
    double bias_sum = 0.0;
    std::size_t lesions = 0;
    for (const auto& roi : rois) {
        if (roi.kind == RoiKind::lesion) {
            const double b = ensemble_bias(stack, roi, truth);
            m.lesions.push_back({{"name", roi.name}, {"bias_percent", b}});
            bias_sum += b;
            ++lesions;
        } else if (roi.kind == RoiKind::background) {
            if (stack.size() < 2) {
                m.cov_note = "CoV needs at least two realizations";
            } else {
                m.cov = ensemble_cov(stack, roi);
            }
        } else {
            double s = 0.0;
            for (const auto& v : stack) s += roi_mse(v, truth, roi);
            m.structures.push_back({{"name", roi.name}, {"roi_mse", s / static_cast<double>(stack.size())}});
        }
    }
    if (lesions) m.mean_bias = bias_sum / static_cast<double>(lesions);
    for (const auto& v : stack) m.mse_to_truth += mse(v, truth);
    m.mse_to_truth /= static_cast<double>(stack.size());
    return m;
}

json to_json(const StackMetrics& m) {
    json j{{"lesions", m.lesions}, {"mse_to_truth", m.mse_to_truth}, {"structures", m.structures}};
    j["mean_lesion_bias_percent"] = m.mean_bias ? json(*m.mean_bias) : json(nullptr);
    j["background_cov_percent"] = m.cov ? json(*m.cov) : json(nullptr);
    if (!m.cov_note.empty()) j["background_cov_note"] = m.cov_note;
    return j;
}

void cmd_evaluate(Run& run, const json& raw) {
    const auto c = parse_evaluate(raw, run.base());
    if (!fs::exists(c.rois)) throw ConfigError("ROI file not found: " + c.rois);
    run.open(to_json(c), json::object());
    run.input("weights", c.weights);
    run.input("study", c.study);
    run.input("rois", c.rois);
    const auto net = load_weights(c.weights);
    const auto st = load_study(c.study);
    const auto rois = load_rois(c.rois);

    std::vector<Tensor<float>> denoised;
    for (const auto& r : st.realizations) denoised.push_back(denoise_volume(net, r));
    const auto input = stack_metrics(st.realizations, st.truth, rois);
    const auto output = stack_metrics(denoised, st.truth, rois);
    if (!output.cov_note.empty()) std::cerr << "evaluate: " << output.cov_note << "; reporting bias only\n";

    const json doc{{"format", "tgd-evaluation"},
                   {"version", 1},
                   {"label", c.label},
                   {"realizations", st.realizations.size()},
                   {"source_hash", hex_digest(network_hash(net))},
                   {"input", to_json(input)},
                   {"output", to_json(output)}};
    write_text(run.file("evaluation.json"), doc.dump(2) + "\n");

    auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 2) : std::string("n/a"); };
    emit_table(run, render_table({"Method", "Lesion Bias (%)", "Background CoV (%)", "MSE to truth"},
                                 {{"noisy input", opt(input.mean_bias), opt(input.cov), sci(input.mse_to_truth)},
                                  {c.label, opt(output.mean_bias), opt(output.cov), sci(output.mse_to_truth)}}));
}

void dispatch(Run& run, const json& raw) {
    const auto& s = run.subcommand();
    if (s == "gen-data") return cmd_gen_data(run, raw);
    if (s == "train") return cmd_train(run, raw, TrainMode::scratch);
    if (s == "tgd-finetune") return cmd_train(run, raw, TrainMode::tgd_finetune);
    if (s == "n2n") return cmd_train(run, raw, TrainMode::n2n_online);
    if (s == "kse-report") return cmd_kse_report(run, raw);
    if (s == "prune-eval") return cmd_prune_eval(run, raw);
    if (s == "evaluate") return cmd_evaluate(run, raw);
    throw ConfigError("unknown subcommand '" + s + "'");
}

void run_subcommand(const std::string& name, const Flags& flags) {
    json raw = json::object();
    fs::path base = fs::current_path();
    if (!flags.config.empty()) {
        raw = load_config_file(flags.config);
        base = fs::absolute(flags.config).parent_path();
    }
    apply_overrides(raw, flags);
    Run run(name, flags, base);
    dispatch(run, raw);
    run.finish();
    std::cout << "run directory: " << run.dir().string() << "\n";
}

/// Re-executes a recorded run into a fresh directory and compares every output
/// byte-for-byte through its content hash.
int replay(const Flags& flags) {
    const json m = read_json(flags.manifest);
    if (m.value("format", std::string{}) != "tgd-run") throw FormatError(FormatError::Kind::bad_magic, flags.manifest + " is not a run manifest");
    for (const auto& in : m.at("inputs")) {
        const auto path = in.at("path").get<std::string>();
        if (content_hash(path) != in.at("hash").get<std::string>()) throw DataError("input changed since the run: " + path);
    }
    Flags f;
    f.out = flags.out;
    f.out_root = flags.out_root;
    Run run(m.at("subcommand").get<std::string>(), f, fs::current_path());
    dispatch(run, m.at("config"));
    if (run.config() != m.at("config")) throw DataError("replayed config differs from the manifest");
    const json outputs = output_entries(run.dir());
    const json& recorded = m.at("outputs");
    run.finish(json{{"replay_of", fs::absolute(flags.manifest).lexically_normal().string()},
                    {"replay_identical", outputs == recorded}});
    std::size_t same = 0;
    for (const auto& o : outputs) {
        for (const auto& r : recorded) same += (r == o);
    }
    std::cout << "replay: " << same << "/" << recorded.size() << " outputs identical ("
              << outputs.size() << " produced) in " << run.dir().string() << "\n";
    if (outputs != recorded) {
        std::cerr << "replay: outputs differ from the recorded run\n";
        return failure;
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Targeted gradient descent experiments: data, training, KSE reports, evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    Flags flags;

    auto common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("-c,--config", flags.config, "JSON config file");
        if (config_required) opt->required();
        sub->add_option("--out", flags.out, "exact output directory (must be empty or absent)");
        sub->add_option("--out-root", flags.out_root, "parent of timestamped run directories")->capture_default_str();
    };
    auto training = [&](CLI::App* sub, bool targeted) {
        sub->add_option("--epochs", flags.epochs, "override training.epochs");
        sub->add_option("--seed", flags.seed, "override training.seed");
        if (targeted) {
            sub->add_option("--phi", flags.phi, "override training.phi");
            sub->add_flag("--freeze-last-layer,!--train-last-layer", flags.freeze_last_layer,
                          "override training.last_layer_frozen");
            sub->add_option("--weights", flags.weights, "override the starting weights");
        }
    };

    auto* gen = app.add_subcommand("gen-data", "simulate a training dataset or a test study");
    common(gen, true);
    auto* train = app.add_subcommand("train", "train a denoiser from scratch");
    common(train, true);
    training(train, false);
    train->add_option("--dataset", flags.dataset, "override the dataset directory");
    auto* finetune = app.add_subcommand("tgd-finetune", "retrain low-KSE channels on a new dataset");
    common(finetune, true);
    training(finetune, true);
    finetune->add_option("--dataset", flags.dataset, "override the dataset directory");
    auto* n2n = app.add_subcommand("n2n", "online Noise2Noise adaptation to one study");
    common(n2n, true);
    training(n2n, true);
    n2n->add_option("--study", flags.study, "override the study directory");
    auto* kse = app.add_subcommand("kse-report", "per-layer KSE scores and the threshold sweep");
    common(kse, false);
    kse->add_option("--weights", flags.weights, "weight file");
    auto* prune = app.add_subcommand("prune-eval", "drop low-KSE kernels and measure the output change");
    common(prune, true);
    prune->add_option("--weights", flags.weights, "override the weight file");
    prune->add_option("--dataset", flags.dataset, "override the dataset directory");
    auto* eval = app.add_subcommand("evaluate", "ensemble bias, CoV and MSE over a study");
    common(eval, true);
    eval->add_option("--weights", flags.weights, "override the weight file");
    eval->add_option("--study", flags.study, "override the study directory");
    eval->add_option("--rois", flags.rois, "override the ROI file");
    auto* rep = app.add_subcommand("replay", "rerun a recorded run and compare its outputs");
    rep->add_option("manifest", flags.manifest, "run_manifest.json of the recorded run")->required();
    rep->add_option("--out", flags.out, "exact output directory");
    rep->add_option("--out-root", flags.out_root, "parent of timestamped run directories")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (rep->parsed()) return replay(flags);
        run_subcommand(app.get_subcommands().front()->get_name(), flags);
        return ok;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_error;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data_error;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data_error;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
}
