#pragma once

// On-disk datasets and studies: raw little-endian float32 volumes plus a
// sidecar manifest.json recording shape, protocol, count levels and seeds.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tgd/json_io.hpp"
#include "tgd/weights_io.hpp"

namespace tgd {

namespace fs = std::filesystem;

inline void write_raw_f32(const fs::path& path, const Tensor<float>& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!out) throw FormatError(FormatError::Kind::io, "failed writing " + path.string());
}

inline Tensor<float> read_raw_f32(const fs::path& path, const Shape& shape) {
    const auto bytes = read_file_bytes(path.string());
    Tensor<float> t(shape);
    if (bytes.size() != t.size() * sizeof(float)) {
        throw FormatError(FormatError::Kind::truncated, path.string() + ": expected " +
                                                            std::to_string(t.size() * sizeof(float)) + " bytes, found " +
                                                            std::to_string(bytes.size()));
    }
    std::memcpy(t.data(), bytes.data(), bytes.size());
    return t;
}

inline std::uint64_t file_hash(const fs::path& path) {
    const auto bytes = read_file_bytes(path.string());
    Fnv1a h;
    h.update(bytes.data(), bytes.size());
    return h.digest();
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
    out << text;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(FormatError::Kind::io, path.string() + ": " + e.what());
    }
}

namespace detail {

inline Shape shape_from_json(const json& j) { return j.get<Shape>(); }

}  // namespace detail

inline void save_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    if (ds.phantoms.empty()) throw std::invalid_argument("save_dataset: dataset has no phantoms");
    const Shape shape = ds.phantoms.front().target.shape();
    json phantoms = json::array();
    for (const auto& p : ds.phantoms) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "phantom_%03zu", p.id);
        json files{{"truth", std::string(stem) + "_truth.f32"}, {"target", std::string(stem) + "_target.f32"}};
        write_raw_f32(dir / files["truth"].get<std::string>(), p.truth);
        write_raw_f32(dir / files["target"].get<std::string>(), p.target);
        json inputs = json::array();
        for (std::size_t k = 0; k < p.inputs.size(); ++k) {
            const std::string name = std::string(stem) + "_level" + std::to_string(k) + ".f32";
            write_raw_f32(dir / name, p.inputs[k]);
            inputs.push_back(name);
        }
        files["inputs"] = std::move(inputs);
        phantoms.push_back({{"id", p.id},
                            {"split", p.validation ? "val" : "train"},
                            {"spec", to_json(p.spec)},
                            {"target_seed", p.target_seed},
                            {"input_seeds", p.input_seeds},
                            {"files", std::move(files)}});
    }
    json manifest{{"format", "tgd-dataset"},       {"version", 1},
                  {"shape", shape},                {"dtype", "float32-le"},
                  {"protocol", to_json(ds.protocol)}, {"count_levels", ds.count_levels},
                  {"phantoms", std::move(phantoms)}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Dataset load_dataset(const fs::path& dir) {
    const json m = read_json(dir / "manifest.json");
    if (m.value("format", std::string{}) != "tgd-dataset") {
        throw FormatError(FormatError::Kind::bad_magic, (dir / "manifest.json").string() + " is not a dataset manifest");
    }
    try {
        Dataset ds;
        ds.protocol = scan_protocol_from_json(m.at("protocol"));
        ds.count_levels = m.at("count_levels").get<std::vector<double>>();
        const Shape shape = detail::shape_from_json(m.at("shape"));
        for (const auto& p : m.at("phantoms")) {
            PhantomVolumes pv;
            pv.id = p.at("id").get<std::size_t>();
            pv.validation = p.at("split").get<std::string>() == "val";
            pv.spec = phantom_spec_from_json(p.at("spec"));
            pv.target_seed = p.at("target_seed").get<std::uint64_t>();
            pv.input_seeds = p.at("input_seeds").get<std::vector<std::uint64_t>>();
            const auto& files = p.at("files");
            pv.truth = read_raw_f32(dir / files.at("truth").get<std::string>(), shape);
            pv.target = read_raw_f32(dir / files.at("target").get<std::string>(), shape);
            for (const auto& f : files.at("inputs")) pv.inputs.push_back(read_raw_f32(dir / f.get<std::string>(), shape));
            ds.phantoms.push_back(std::move(pv));
        }
        return ds;
    } catch (const json::exception& e) {
        throw FormatError(FormatError::Kind::io, (dir / "manifest.json").string() + ": " + e.what());
    }
}

/// Lesion, background and structure ROIs derived from the study geometry.
inline std::vector<Roi> study_rois(const PhantomSpec& spec, double margin = 2.0) {
    std::vector<Roi> rois;
    for (std::size_t i = 0; i < spec.lesions.size(); ++i) rois.push_back(lesion_roi(spec, i));
    rois.push_back(background_roi(spec, margin));
    for (std::size_t i = 0; i < spec.disks.size(); ++i) rois.push_back(structure_roi(spec, i, margin));
    return rois;
}

inline void save_rois(const std::vector<Roi>& rois, const fs::path& path) {
    json arr = json::array();
    for (const auto& r : rois) arr.push_back(to_json(r));
    write_text(path, json{{"format", "tgd-rois"}, {"version", 1}, {"rois", arr}}.dump() + "\n");
}

inline std::vector<Roi> load_rois(const fs::path& path) {
    const json j = read_json(path);
    std::vector<Roi> rois;
    try {
        for (const auto& r : j.at("rois")) rois.push_back(roi_from_json(r));
    } catch (const json::exception& e) {
        throw FormatError(FormatError::Kind::io, path.string() + ": " + e.what());
    }
    return rois;
}

inline void save_study(const Study& st, const fs::path& dir) {
    fs::create_directories(dir);
    write_raw_f32(dir / "activity.f32", st.activity);
    write_raw_f32(dir / "truth.f32", st.truth);
    json reals = json::array();
    for (std::size_t r = 0; r < st.realizations.size(); ++r) {
        const std::string name = "realization_" + std::to_string(r) + ".f32";
        write_raw_f32(dir / name, st.realizations[r]);
        reals.push_back(name);
    }
    write_raw_f32(dir / "half1.f32", st.half1);
    write_raw_f32(dir / "half2.f32", st.half2);
    save_rois(study_rois(st.spec), dir / "rois.json");
    json manifest{{"format", "tgd-study"},
                  {"version", 1},
                  {"shape", st.activity.shape()},
                  {"dtype", "float32-le"},
                  {"spec", to_json(st.spec)},
                  {"protocol", to_json(st.protocol)},
                  {"thin_p", st.thin_p},
                  {"seeds", st.seeds},
                  {"files",
                   {{"activity", "activity.f32"},
                    {"truth", "truth.f32"},
                    {"realizations", reals},
                    {"half1", "half1.f32"},
                    {"half2", "half2.f32"},
                    {"rois", "rois.json"}}}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Study load_study(const fs::path& dir) {
    const json m = read_json(dir / "manifest.json");
    if (m.value("format", std::string{}) != "tgd-study") {
        throw FormatError(FormatError::Kind::bad_magic, (dir / "manifest.json").string() + " is not a study manifest");
    }
    try {
        Study st;
        const Shape shape = detail::shape_from_json(m.at("shape"));
        st.spec = phantom_spec_from_json(m.at("spec"));
        st.protocol = scan_protocol_from_json(m.at("protocol"));
        st.thin_p = m.at("thin_p").get<double>();
        st.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
        const auto& f = m.at("files");
        st.activity = read_raw_f32(dir / f.at("activity").get<std::string>(), shape);
        st.truth = read_raw_f32(dir / f.at("truth").get<std::string>(), shape);
        for (const auto& r : f.at("realizations")) st.realizations.push_back(read_raw_f32(dir / r.get<std::string>(), shape));
        st.half1 = read_raw_f32(dir / f.at("half1").get<std::string>(), shape);
        st.half2 = read_raw_f32(dir / f.at("half2").get<std::string>(), shape);
        return st;
    } catch (const json::exception& e) {
        throw FormatError(FormatError::Kind::io, (dir / "manifest.json").string() + ": " + e.what());
    }
}

}  // namespace tgd
