#pragma once

// JSON forms of reports, masks, configs and phantom geometry.

#include <string>
#include <vector>

#include <json.hpp>

#include "tgd/kse.hpp"
#include "tgd/masking.hpp"
#include "tgd/metrics.hpp"
#include "tgd/phantom.hpp"
#include "tgd/train.hpp"

namespace tgd {

using json = nlohmann::ordered_json;

inline json to_json(const NetworkConfig& c) {
    return {{"depth", c.depth}, {"channels", c.channels}, {"input_slices", c.input_slices}};
}

inline json to_json(const KseConfig& c) { return {{"alpha", c.alpha}, {"k_neighbors", c.k_neighbors}}; }

inline json to_json(const KseReport& r) {
    json layers = json::array();
    for (const auto& l : r.layers) {
        layers.push_back({{"conv_layer", l.conv_layer},
                          {"sparsity", l.sparsity},
                          {"entropy", l.entropy},
                          {"sparsity_normalized", l.sparsity_norm},
                          {"entropy_normalized", l.entropy_norm},
                          {"kse", l.kse}});
    }
    return {{"format", "tgd-kse-report"},
            {"version", 1},
            {"config", to_json(r.config)},
            {"source_hash", hex_digest(r.source_hash)},
            {"layers", std::move(layers)}};
}

inline json to_json(const MaskSet& m) {
    json layers = json::array();
    for (std::size_t i = 0; i < m.conv.size(); ++i) {
        json layer{{"conv_layer", i}, {"conv_mask", m.conv[i]}};
        if (!m.bn[i].empty()) layer["bn_mask"] = m.bn[i];
        layers.push_back(std::move(layer));
    }
    return {{"format", "tgd-mask-set"},
            {"version", 1},
            {"phi", m.phi},
            {"generation", m.generation},
            {"last_layer_frozen", m.last_layer_frozen},
            {"source_hash", hex_digest(m.source_hash)},
            {"retrained_channels", m.retrained_channels()},
            {"layers", std::move(layers)}};
}

inline MaskSet mask_set_from_json(const json& j) {
    MaskSet m;
    m.phi = j.at("phi").get<double>();
    m.generation = j.at("generation").get<int>();
    m.last_layer_frozen = j.at("last_layer_frozen").get<bool>();
    m.source_hash = std::stoull(j.at("source_hash").get<std::string>(), nullptr, 16);
    for (const auto& layer : j.at("layers")) {
        m.conv.push_back(layer.at("conv_mask").get<ChannelMask>());
        m.bn.push_back(layer.contains("bn_mask") ? layer.at("bn_mask").get<ChannelMask>() : ChannelMask{});
    }
    return m;
}

inline json to_json(const TrainConfig& c) {
    json j{{"mode", to_string(c.mode)},
           {"network", to_json(c.network)},
           {"learning_rate", c.learning_rate},
           {"weight_decay", c.weight_decay},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"last_layer_frozen", c.last_layer_frozen},
           {"kse", to_json(c.kse)},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_epsilon", c.adam_epsilon}};
    j["phi"] = c.phi ? json(*c.phi) : json(nullptr);
    return j;
}

/// One JSON object per epoch followed by a summary line. Wall time is left out
/// so that reruns produce identical bytes.
inline std::string train_record_jsonl(const TrainRecord& r) {
    std::string out;
    for (const auto& e : r.epochs) {
        out += json{{"epoch", e.epoch}, {"train_loss", e.train_loss}}.dump();
        out += '\n';
    }
    json summary{{"summary", true},
                 {"config", to_json(r.config)},
                 {"epochs_run", r.epochs.size()},
                 {"initial_loss", r.initial_loss()},
                 {"final_loss", r.final_loss()},
                 {"retrained_channels", r.retrained_channels},
                 {"initial_hash", hex_digest(r.initial_hash)},
                 {"final_hash", hex_digest(r.final_hash)}};
    summary["validation_mse"] = r.validation_mse ? json(*r.validation_mse) : json(nullptr);
    out += summary.dump();
    out += '\n';
    return out;
}

inline json to_json(const PhantomSpec& s) {
    json ellipses = json::array(), lesions = json::array(), disks = json::array();
    for (const auto& e : s.ellipses) {
        ellipses.push_back({{"cx", e.cx}, {"cy", e.cy}, {"ax", e.ax}, {"ay", e.ay}, {"angle", e.angle}, {"intensity", e.intensity}});
    }
    for (const auto& l : s.lesions) {
        lesions.push_back({{"cx", l.cx}, {"cy", l.cy}, {"radius", l.radius}, {"contrast", l.contrast}});
    }
    for (const auto& d : s.disks) {
        disks.push_back({{"cx", d.cx}, {"cy", d.cy}, {"radius", d.radius}, {"intensity", d.intensity}});
    }
    return {{"height", s.height}, {"width", s.width},   {"slices", s.slices}, {"seed", s.seed},
            {"ellipses", ellipses}, {"lesions", lesions}, {"disks", disks}};
}

inline PhantomSpec phantom_spec_from_json(const json& j) {
    PhantomSpec s;
    s.height = j.at("height").get<std::size_t>();
    s.width = j.at("width").get<std::size_t>();
    s.slices = j.at("slices").get<std::size_t>();
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& e : j.value("ellipses", json::array())) {
        s.ellipses.push_back({e.at("cx").get<double>(), e.at("cy").get<double>(), e.at("ax").get<double>(),
                              e.at("ay").get<double>(), e.value("angle", 0.0), e.at("intensity").get<double>()});
    }
    for (const auto& l : j.value("lesions", json::array())) {
        s.lesions.push_back({l.at("cx").get<double>(), l.at("cy").get<double>(), l.at("radius").get<double>(),
                             l.at("contrast").get<double>()});
    }
    for (const auto& d : j.value("disks", json::array())) {
        s.disks.push_back({d.at("cx").get<double>(), d.at("cy").get<double>(), d.at("radius").get<double>(),
                           d.at("intensity").get<double>()});
    }
    return s;
}

inline json to_json(const ScanProtocol& p) {
    return {{"psf_sigma", p.psf_sigma}, {"count_budget", p.count_budget}, {"seed", p.seed}};
}

inline ScanProtocol scan_protocol_from_json(const json& j) {
    return {j.at("psf_sigma").get<double>(), j.at("count_budget").get<double>(), j.at("seed").get<std::uint64_t>()};
}

inline json to_json(const Roi& r) { return {{"kind", to_string(r.kind)}, {"name", r.name}, {"indices", r.indices}}; }

inline Roi roi_from_json(const json& j) {
    return {roi_kind_from_string(j.at("kind").get<std::string>()), j.value("name", std::string{}),
            j.at("indices").get<std::vector<std::size_t>>()};
}

}  // namespace tgd
