#pragma once

// Run configurations for the command-line front end. Each config parses from
// JSON with field-path diagnostics and echoes back to JSON in a form the parser
// accepts, so a run manifest can be replayed verbatim.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tgd/json_io.hpp"

namespace tgd {

/// Read access to one JSON object that reports missing or mistyped fields by
/// their full dotted path.
class ConfigReader {
public:
    ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: '" + display() + "' must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    template <class T>
    T req(const std::string& key) const {
        if (!has(key)) throw ConfigError("config: missing field '" + field(key) + "'");
        return get<T>(key);
    }

    template <class T>
    T opt(const std::string& key, T fallback) const {
        return has(key) ? get<T>(key) : fallback;
    }

    ConfigReader child(const std::string& key) const {
        if (!has(key)) throw ConfigError("config: missing field '" + field(key) + "'");
        return ConfigReader(j_.at(key), field(key));
    }

    const json& raw(const std::string& key) const { return j_.at(key); }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string display() const { return path_.empty() ? "<root>" : path_; }

    template <class T>
    T get(const std::string& key) const {
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: field '" + field(key) + "' has the wrong type");
        }
    }

    const json& j_;
    std::string path_;
};

namespace detail {

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path path(p);
    if (path.is_relative()) path = base / path;
    return std::filesystem::weakly_canonical(path).string();
}

inline NetworkConfig read_network(const ConfigReader& r) {
    NetworkConfig c;
    c.depth = r.opt("depth", c.depth);
    c.channels = r.opt("channels", c.channels);
    c.input_slices = r.opt("input_slices", c.input_slices);
    c.validate();
    return c;
}

inline KseConfig read_kse(const ConfigReader& r) {
    KseConfig c;
    c.alpha = r.opt("alpha", c.alpha);
    c.k_neighbors = r.opt("k_neighbors", c.k_neighbors);
    c.validate();
    return c;
}

inline ScanProtocol read_protocol(const ConfigReader& r) {
    ScanProtocol p{r.req<double>("psf_sigma"), r.req<double>("count_budget"), r.req<std::uint64_t>("seed")};
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return p;
}

inline std::vector<double> read_phis(const ConfigReader& r, const std::string& key) {
    auto phis = r.opt(key, std::vector<double>{0.3, 0.4, 0.5, 0.6});
    if (phis.empty()) throw ConfigError("config: field '" + r.field(key) + "' must not be empty");
    for (double p : phis) {
        if (!(p >= 0.0)) throw ConfigError("config: field '" + r.field(key) + "' holds a negative threshold");
    }
    return phis;
}

}  // namespace detail

// --- gen-data ---

struct GenDataConfig {
    std::string kind = "dataset";  // "dataset" or "study"
    ScanProtocol protocol;

    // kind == "dataset"
    std::size_t phantom_count = 0;
    std::uint64_t phantom_seed = 0;
    RandomPhantomOptions phantom_options;
    std::vector<double> count_levels = default_count_levels();
    std::size_t validation_phantoms = 0;

    // kind == "study"
    PhantomSpec study_phantom;
    std::size_t realizations = 1;
    double thin_p = 0.5;
    bool noiseless = false;
};

inline RandomPhantomOptions read_phantom_options(const ConfigReader& r) {
    RandomPhantomOptions o;
    o.height = r.opt("height", o.height);
    o.width = r.opt("width", o.width);
    o.slices = r.opt("slices", o.slices);
    o.max_organs = r.opt("max_organs", o.max_organs);
    o.max_lesions = r.opt("max_lesions", o.max_lesions);
    o.lesion_radius = r.opt("lesion_radius", o.lesion_radius);
    o.lesion_contrast = r.opt("lesion_contrast", o.lesion_contrast);
    return o;
}

inline json to_json(const RandomPhantomOptions& o) {
    return {{"height", o.height},       {"width", o.width},
            {"slices", o.slices},       {"max_organs", o.max_organs},
            {"max_lesions", o.max_lesions}, {"lesion_radius", o.lesion_radius},
            {"lesion_contrast", o.lesion_contrast}};
}

inline GenDataConfig parse_gen_data(const json& j) {
    const ConfigReader r(j, "");
    GenDataConfig c;
    c.kind = r.req<std::string>("kind");
    c.protocol = detail::read_protocol(r.child("protocol"));
    if (c.kind == "dataset") {
        const auto p = r.child("phantoms");
        c.phantom_count = p.req<std::size_t>("count");
        c.phantom_seed = p.req<std::uint64_t>("seed");
        c.phantom_options = read_phantom_options(p);
        c.count_levels = r.opt("count_levels", c.count_levels);
        c.validation_phantoms = r.opt<std::size_t>("validation_phantoms", 0);
        if (c.phantom_count == 0) throw ConfigError("config: field 'phantoms.count' must be >= 1");
        if (c.validation_phantoms > c.phantom_count) {
            throw ConfigError("config: field 'validation_phantoms' exceeds 'phantoms.count'");
        }
    } else if (c.kind == "study") {
        const auto p = r.child("phantom");
        try {
            if (p.has("ellipses")) {
                c.study_phantom = phantom_spec_from_json(r.raw("phantom"));
            } else {
                c.study_phantom = random_phantom_spec(p.req<std::uint64_t>("random_seed"), read_phantom_options(p));
                for (const auto& l : p.opt("lesions", json::array())) {
                    c.study_phantom.lesions.push_back({l.at("cx").get<double>(), l.at("cy").get<double>(),
                                                       l.at("radius").get<double>(), l.at("contrast").get<double>()});
                }
                for (const auto& d : p.opt("disks", json::array())) {
                    c.study_phantom.disks.push_back({d.at("cx").get<double>(), d.at("cy").get<double>(),
                                                     d.at("radius").get<double>(), d.at("intensity").get<double>()});
                }
            }
            c.study_phantom.validate();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: malformed field 'phantom': ") + e.what());
        } catch (const std::invalid_argument& e) {
            if (dynamic_cast<const ConfigError*>(&e)) throw;
            throw ConfigError(std::string("config: ") + e.what());
        }
        c.realizations = r.req<std::size_t>("realizations");
        c.thin_p = r.opt("thin_p", c.thin_p);
        c.noiseless = r.opt("noiseless", false);
        if (c.realizations < 1) throw ConfigError("config: field 'realizations' must be >= 1");
        if (!(c.thin_p > 0.0 && c.thin_p < 1.0)) throw ConfigError("config: field 'thin_p' must lie in (0,1)");
    } else {
        throw ConfigError("config: field 'kind' must be \"dataset\" or \"study\", got \"" + c.kind + "\"");
    }
    return c;
}

inline json to_json(const GenDataConfig& c) {
    json j{{"kind", c.kind}, {"protocol", to_json(c.protocol)}};
    if (c.kind == "dataset") {
        json p = to_json(c.phantom_options);
        p["count"] = c.phantom_count;
        p["seed"] = c.phantom_seed;
        j["phantoms"] = p;
        j["count_levels"] = c.count_levels;
        j["validation_phantoms"] = c.validation_phantoms;
    } else {
        j["phantom"] = to_json(c.study_phantom);  // explicit geometry, whatever the source
        j["realizations"] = c.realizations;
        j["thin_p"] = c.thin_p;
        j["noiseless"] = c.noiseless;
    }
    return j;
}

// --- train / tgd-finetune / n2n ---

struct TrainRunConfig {
    TrainConfig train;
    std::string dataset;  // scratch, tgd_finetune
    std::string study;    // n2n_online
    std::string weights;  // tgd_finetune, n2n_online
    bool network_given = false;
};

inline TrainRunConfig parse_train_run(const json& j, TrainMode mode, const std::filesystem::path& base) {
    const ConfigReader r(j, "");
    TrainRunConfig c;
    c.train = TrainConfig::defaults_for(mode);
    if (r.has("mode") && train_mode_from_string(r.req<std::string>("mode")) != mode) {
        throw ConfigError("config: field 'mode' is \"" + r.req<std::string>("mode") + "\" but the subcommand runs " +
                          to_string(mode));
    }
    if (mode == TrainMode::n2n_online) {
        c.study = detail::resolve_path(r.req<std::string>("study"), base);
    } else {
        c.dataset = detail::resolve_path(r.req<std::string>("dataset"), base);
    }
    if (mode != TrainMode::scratch) c.weights = detail::resolve_path(r.req<std::string>("weights"), base);
    c.network_given = r.has("network");
    if (mode == TrainMode::scratch || c.network_given) c.train.network = detail::read_network(r.child("network"));

    const auto t = r.child("training");
    auto& tc = c.train;
    tc.epochs = t.req<int>("epochs");
    tc.seed = t.req<std::uint64_t>("seed");
    tc.learning_rate = t.opt("learning_rate", tc.learning_rate);
    tc.weight_decay = t.opt("weight_decay", tc.weight_decay);
    tc.batch_size = t.opt("batch_size", tc.batch_size);
    tc.beta1 = t.opt("beta1", tc.beta1);
    tc.beta2 = t.opt("beta2", tc.beta2);
    tc.adam_epsilon = t.opt("adam_epsilon", tc.adam_epsilon);
    if (mode != TrainMode::scratch) {
        if (t.has("phi")) tc.phi = t.req<double>("phi");
        tc.last_layer_frozen = t.opt("last_layer_frozen", tc.last_layer_frozen);
        if (t.has("kse")) tc.kse = detail::read_kse(t.child("kse"));
    }
    return c;
}

inline json to_json(const TrainRunConfig& c) {
    json j{{"mode", to_string(c.train.mode)}};
    if (!c.dataset.empty()) j["dataset"] = c.dataset;
    if (!c.study.empty()) j["study"] = c.study;
    if (!c.weights.empty()) j["weights"] = c.weights;
    if (c.train.mode == TrainMode::scratch || c.network_given) j["network"] = to_json(c.train.network);
    json t{{"epochs", c.train.epochs},
           {"seed", c.train.seed},
           {"learning_rate", c.train.learning_rate},
           {"weight_decay", c.train.weight_decay},
           {"batch_size", c.train.batch_size},
           {"beta1", c.train.beta1},
           {"beta2", c.train.beta2},
           {"adam_epsilon", c.train.adam_epsilon}};
    if (c.train.mode != TrainMode::scratch) {
        t["phi"] = c.train.phi ? json(*c.train.phi) : json(nullptr);
        t["last_layer_frozen"] = c.train.last_layer_frozen;
        t["kse"] = to_json(c.train.kse);
    }
    j["training"] = t;
    return j;
}

// --- kse-report ---

struct KseReportConfig {
    std::string weights;
    KseConfig kse;
    std::vector<double> phis{0.3, 0.4, 0.5, 0.6};
};

inline KseReportConfig parse_kse_report(const json& j, const std::filesystem::path& base) {
    const ConfigReader r(j, "");
    KseReportConfig c;
    c.weights = detail::resolve_path(r.req<std::string>("weights"), base);
    if (r.has("kse")) c.kse = detail::read_kse(r.child("kse"));
    c.phis = detail::read_phis(r, "phis");
    return c;
}

inline json to_json(const KseReportConfig& c) {
    return {{"weights", c.weights}, {"kse", to_json(c.kse)}, {"phis", c.phis}};
}

// --- prune-eval ---

struct PruneEvalConfig {
    std::string weights;
    std::string dataset;
    KseConfig kse;
    std::vector<double> phis{0.3, 0.4, 0.5, 0.6};
    std::string split = "val";  // "val", "train" or "all"
};

inline PruneEvalConfig parse_prune_eval(const json& j, const std::filesystem::path& base) {
    const ConfigReader r(j, "");
    PruneEvalConfig c;
    c.weights = detail::resolve_path(r.req<std::string>("weights"), base);
    c.dataset = detail::resolve_path(r.req<std::string>("dataset"), base);
    if (r.has("kse")) c.kse = detail::read_kse(r.child("kse"));
    c.phis = detail::read_phis(r, "phis");
    c.split = r.opt("split", c.split);
    if (c.split != "val" && c.split != "train" && c.split != "all") {
        throw ConfigError("config: field 'split' must be \"val\", \"train\" or \"all\"");
    }
    return c;
}

inline json to_json(const PruneEvalConfig& c) {
    return {{"weights", c.weights}, {"dataset", c.dataset}, {"kse", to_json(c.kse)}, {"phis", c.phis}, {"split", c.split}};
}

// --- evaluate ---

struct EvaluateConfig {
    std::string weights;
    std::string study;
    std::string rois;  // defaults to <study>/rois.json
    std::string label = "network";
};

inline EvaluateConfig parse_evaluate(const json& j, const std::filesystem::path& base) {
    const ConfigReader r(j, "");
    EvaluateConfig c;
    c.weights = detail::resolve_path(r.req<std::string>("weights"), base);
    c.study = detail::resolve_path(r.req<std::string>("study"), base);
    c.rois = r.has("rois") ? detail::resolve_path(r.req<std::string>("rois"), base)
                           : (std::filesystem::path(c.study) / "rois.json").string();
    c.label = r.opt("label", c.label);
    return c;
}

inline json to_json(const EvaluateConfig& c) {
    return {{"weights", c.weights}, {"study", c.study}, {"rois", c.rois}, {"label", c.label}};
}

}  // namespace tgd
