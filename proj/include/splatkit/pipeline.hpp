// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/amodal.hpp"
#include "splatkit/cluster.hpp"
#include "splatkit/common.hpp"
#include "splatkit/flow.hpp"
#include "splatkit/gaussian.hpp"
#include "splatkit/io/ply.hpp"
#include "splatkit/io/png.hpp"
#include "splatkit/lift.hpp"
#include "splatkit/lighting.hpp"
#include "splatkit/objects.hpp"
#include "splatkit/occlusion.hpp"
#include "splatkit/render.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/viewgen.hpp"
#include "splatkit/voxel.hpp"

extern "C" {
extern char** environ;  // POSIX environment vector
}

namespace splatkit {

inline constexpr const char* kManifestSchema = "splatkit-manifest/1";
inline constexpr const char* kBundleSchema = "splatkit-bundle/1";
inline constexpr const char* kProvenanceSchema = "splatkit-provenance/1";
inline constexpr const char* kEnvPrefix = "SPLATKIT_";

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct StageSpec {
    std::string name;
    nlohmann::json config = nlohmann::json::object();
};

// A pipeline run in one document: the input scene, the working directory,
// shared settings, and an ordered list of stages with per-stage configs.
struct PipelineManifest {
    std::string schema = kManifestSchema;
    std::string scene;    // input gaussian-splat PLY
    std::string out_dir;  // working directory; stages read and write artifacts here
    std::uint64_t seed = 0;
    int threads = 1;
    // "unlabeled" (gaussians without an instance id), "boundary" (the labeled
    // instance hugging the scene bounds), or an explicit instance id.
    nlohmann::json background = "unlabeled";
    std::vector<StageSpec> stages;
};

// Stages in dependency order; a manifest must list its stages in this order.
inline const std::vector<std::string>& pipeline_stage_names() {
    static const std::vector<std::string> names = {
        "segment", "parse", "occlude", "amodal_data", "regen", "compose", "render"};
    return names;
}

inline int stage_rank(const std::string& name) {
    const auto& names = pipeline_stage_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

// Config keys each stage understands; validation rejects anything else so
// typos fail before any stage runs.
inline const std::map<std::string, std::set<std::string>>& stage_config_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"segment",
         {"views", "view_radius", "resolution", "steps", "batch", "lift_lr", "similarity",
          "knn", "erode"}},
        {"parse", {"labels"}},
        {"occlude", {"resolution", "window", "ring_radius"}},
        {"amodal_data", {"frames", "frame_size", "only_flagged"}},
        {"regen",
         {"voxel_resolution", "pool", "checkpoint", "injection_time", "sample_steps",
          "targets"}},
        {"compose", {"drop", "swap"}},
        {"render",
         {"azimuth", "elevation", "radius", "resolution", "window", "source", "name"}},
    };
    return keys;
}

inline nlohmann::json manifest_to_json(const PipelineManifest& m) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageSpec& s : m.stages)
        stages.push_back({{"stage", s.name},
                          {"config", s.config.is_null() ? nlohmann::json::object() : s.config}});
    return {{"schema", m.schema},     {"scene", m.scene},           {"out_dir", m.out_dir},
            {"seed", m.seed},         {"threads", m.threads},       {"background", m.background},
            {"stages", stages}};
}

inline PipelineManifest manifest_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
    static const std::set<std::string> known = {"schema",     "scene",   "out_dir", "seed",
                                               "threads",    "background", "stages"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key))
            throw ValidationError("unknown manifest key \"" + key + "\"");
    }
    PipelineManifest m;
    m.schema = j.value("schema", std::string());
    m.scene = j.value("scene", std::string());
    m.out_dir = j.value("out_dir", std::string());
    m.seed = j.value("seed", std::uint64_t{0});
    m.threads = j.value("threads", 1);
    if (j.contains("background")) m.background = j.at("background");
    if (j.contains("stages")) {
        if (!j.at("stages").is_array())
            throw ValidationError("manifest stages must be an array");
        for (const nlohmann::json& e : j.at("stages")) {
            if (!e.is_object() || !e.contains("stage"))
                throw ValidationError("each stage entry needs a \"stage\" name");
            StageSpec s;
            s.name = e.at("stage").get<std::string>();
            if (e.contains("config")) {
                if (!e.at("config").is_object())
                    throw ValidationError("stage config for \"" + s.name +
                                          "\" must be an object");
                s.config = e.at("config");
            }
            for (const auto& [key, value] : e.items()) {
                (void)value;
                if (key != "stage" && key != "config")
                    throw ValidationError("unknown stage entry key \"" + key + "\"");
            }
            m.stages.push_back(std::move(s));
        }
    }
    return m;
}

inline void validate_manifest(const PipelineManifest& m) {
    if (m.schema != kManifestSchema)
        throw ValidationError("unsupported manifest schema \"" + m.schema + "\" (want " +
                              kManifestSchema + ")");
    if (m.scene.empty()) throw ValidationError("manifest needs an input scene path");
    if (m.out_dir.empty()) throw ValidationError("manifest needs an out_dir");
    if (m.threads < 1) throw ValidationError("manifest threads must be at least 1");
    if (m.background.is_string()) {
        const std::string p = m.background.get<std::string>();
        if (p != "unlabeled" && p != "boundary")
            throw ValidationError(
                "manifest background must be \"unlabeled\", \"boundary\", or an instance id");
    } else if (m.background.is_number_integer() || m.background.is_number_unsigned()) {
        if (m.background.get<long long>() < 0)
            throw ValidationError("manifest background instance id must be non-negative");
    } else {
        throw ValidationError(
            "manifest background must be \"unlabeled\", \"boundary\", or an instance id");
    }
    if (m.stages.empty()) throw ValidationError("manifest lists no stages");
    int prev = -1;
    for (const StageSpec& s : m.stages) {
        const int rank = stage_rank(s.name);
        if (rank < 0) throw ValidationError("unknown pipeline stage \"" + s.name + "\"");
        if (rank <= prev)
            throw ValidationError("stage \"" + s.name +
                                  "\" is out of order or duplicated; stages run " +
                                  "segment, parse, occlude, amodal_data, regen, compose, render");
        prev = rank;
        if (!s.config.is_null() && !s.config.is_object())
            throw ValidationError("stage config for \"" + s.name + "\" must be an object");
        const std::set<std::string>& allowed = stage_config_keys().at(s.name);
        if (s.config.is_object()) {
            for (const auto& [key, value] : s.config.items()) {
                (void)value;
                if (!allowed.count(key))
                    throw ValidationError("unknown config key \"" + key + "\" for stage " +
                                          s.name);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Environment overrides
// ---------------------------------------------------------------------------

namespace detail {

// "300" becomes a number, "true" a boolean, anything unparseable stays a string.
inline nlohmann::json env_json_value(const std::string& value) {
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) return value;
    return parsed;
}

inline std::string ascii_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

// Applies SPLATKIT_* overrides. Top-level keys: SPLATKIT_SEED, SPLATKIT_THREADS,
// SPLATKIT_SCENE, SPLATKIT_OUT_DIR, SPLATKIT_BACKGROUND. Stage configs use a
// double-underscore separator, e.g. SPLATKIT_SEGMENT__STEPS=300; overrides for
// stages the manifest does not list are ignored.
inline void apply_env_overrides(PipelineManifest& m,
                                std::vector<std::pair<std::string, std::string>> entries) {
    std::sort(entries.begin(), entries.end());
    const std::string prefix = kEnvPrefix;
    for (const auto& [name, value] : entries) {
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string rest = name.substr(prefix.size());
        const std::size_t sep = rest.find("__");
        if (sep == std::string::npos) {
            try {
                if (rest == "SEED") {
                    m.seed = std::stoull(value);
                } else if (rest == "THREADS") {
                    m.threads = std::stoi(value);
                } else if (rest == "SCENE") {
                    m.scene = value;
                } else if (rest == "OUT_DIR") {
                    m.out_dir = value;
                } else if (rest == "BACKGROUND") {
                    m.background = detail::env_json_value(value);
                } else {
                    throw ValidationError("unknown environment override " + name);
                }
            } catch (const std::invalid_argument&) {
                throw ValidationError("environment override " + name +
                                      " has a non-numeric value \"" + value + "\"");
            } catch (const std::out_of_range&) {
                throw ValidationError("environment override " + name +
                                      " is out of range: \"" + value + "\"");
            }
        } else {
            const std::string stage = detail::ascii_lower(rest.substr(0, sep));
            const std::string key = detail::ascii_lower(rest.substr(sep + 2));
            if (stage.empty() || key.empty())
                throw ValidationError("malformed environment override " + name);
            for (StageSpec& s : m.stages)
                if (s.name == stage) s.config[key] = detail::env_json_value(value);
        }
    }
}

inline void apply_env_overrides(PipelineManifest& m) {
    std::vector<std::pair<std::string, std::string>> entries;
    for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
        const std::string kv = *e;
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) continue;
        entries.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    apply_env_overrides(m, std::move(entries));
}

// ---------------------------------------------------------------------------
// JSON and digest helpers
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open: " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw ValidationError("write failed: " + path.string());
}

inline std::uint64_t fnv1a64(const char* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string digest_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot hash missing file: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
    }
    return digest_hex(h);
}

inline std::string json_digest(const nlohmann::json& j) {
    const std::string s = j.dump();
    return digest_hex(fnv1a64(s.data(), s.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scene bundles
// ---------------------------------------------------------------------------

// A parsed scene: extracted objects in local frames with placement configs,
// the residual background, and the provenance log of the run that made it.
struct SceneBundle {
    GaussianScene background;  // may hold zero gaussians; carries the canvas color
    std::vector<ExtractedObject> objects;
    nlohmann::json provenance = nlohmann::json::object();
};

// Rebuilds the full scene: background first, then each object placed through
// its config, ascending by instance id.
inline GaussianScene compose(const SceneBundle& bundle) {
    if (bundle.background.empty() && bundle.objects.empty())
        throw ValidationError("cannot compose an empty bundle");
    std::vector<const ExtractedObject*> order;
    order.reserve(bundle.objects.size());
    for (const ExtractedObject& o : bundle.objects) order.push_back(&o);
    std::stable_sort(order.begin(), order.end(),
                     [](const ExtractedObject* a, const ExtractedObject* b) {
                         return a->source_instance < b->source_instance;
                     });
    GaussianScene out = bundle.background;
    for (const ExtractedObject* o : order) {
        const GaussianScene placed = place_object(o->object, o->config);
        out.has_features = out.has_features || placed.has_features;
        out.gaussians.insert(out.gaussians.end(), placed.gaussians.begin(),
                             placed.gaussians.end());
    }
    return out;
}

// Writes the bundle layout under `dir`: objects/object_<id>.ply + .json per
// object, background.ply when non-empty, and bundle.json as the index.
// Returns the written paths relative to `dir`.
inline std::vector<std::string> save_bundle(const SceneBundle& bundle,
                                            const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root = dir;
    fs::create_directories(root);
    fs::remove_all(root / "objects");
    fs::create_directories(root / "objects");

    std::vector<std::string> written;
    nlohmann::json objects = nlohmann::json::array();
    for (const ExtractedObject& o : bundle.objects) {
        const std::string base = "objects/object_" + std::to_string(o.source_instance);
        write_ply(o.object, (root / (base + ".ply")).string());
        detail::write_json_file(root / (base + ".json"),
                                {{"instance", o.source_instance},
                                 {"config", object_config_to_json(o.config)}});
        written.push_back(base + ".ply");
        written.push_back(base + ".json");
        objects.push_back({{"instance", o.source_instance},
                           {"ply", base + ".ply"},
                           {"config", base + ".json"}});
    }

    nlohmann::json index = {{"schema", kBundleSchema},
                            {"objects", objects},
                            {"background_color",
                             {bundle.background.background.x(), bundle.background.background.y(),
                              bundle.background.background.z()}}};
    if (!bundle.background.empty()) {
        write_ply(bundle.background, (root / "background.ply").string());
        written.push_back("background.ply");
        index["background"] = "background.ply";
    } else {
        fs::remove(root / "background.ply");
        index["background"] = nullptr;
    }
    detail::write_json_file(root / "bundle.json", index);
    written.push_back("bundle.json");
    return written;
}

inline SceneBundle load_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root = dir;
    const fs::path index_path = root / "bundle.json";
    if (!fs::exists(index_path))
        throw ValidationError("no scene bundle at " + dir +
                              " (missing bundle.json); run the parse stage first");
    const nlohmann::json index = detail::read_json_file(index_path);
    if (index.value("schema", std::string()) != kBundleSchema)
        throw ValidationError("unsupported bundle schema in " + index_path.string());

    SceneBundle bundle;
    if (index.contains("background") && !index.at("background").is_null()) {
        bundle.background =
            read_ply((root / index.at("background").get<std::string>()).string());
    }
    if (index.contains("background_color")) {
        const auto& c = index.at("background_color");
        bundle.background.background =
            Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
    }
    for (const nlohmann::json& e : index.at("objects")) {
        ExtractedObject o;
        o.source_instance = e.at("instance").get<int>();
        o.object = read_ply((root / e.at("ply").get<std::string>()).string());
        const nlohmann::json meta =
            detail::read_json_file(root / e.at("config").get<std::string>());
        o.config = object_config_from_json(meta.at("config"));
        bundle.objects.push_back(std::move(o));
    }
    const fs::path prov = root / "provenance.json";
    if (fs::exists(prov)) bundle.provenance = detail::read_json_file(prov);
    return bundle;
}

// ---------------------------------------------------------------------------
// Pipeline state and stage runners
// ---------------------------------------------------------------------------

namespace detail {

struct PipelineState {
    PipelineManifest manifest;
    std::filesystem::path out;
    std::optional<GaussianScene> input;
    std::optional<GaussianScene> labeled;
    std::string labeled_source;  // path recorded in provenance
    std::optional<SceneBundle> bundle;
    std::map<int, std::pair<ViewGrid, CandidateSet>> candidates;
    std::optional<GaussianScene> composed;
};

inline void note_input(nlohmann::json& record, const std::string& label,
                       const std::filesystem::path& file) {
    record["inputs"][label] = file_digest(file);
}

inline void note_output(PipelineState& st, nlohmann::json& record, const std::string& rel) {
    record["outputs"][rel] = file_digest(st.out / rel);
}

inline const GaussianScene& input_scene(PipelineState& st) {
    if (!st.input) st.input = read_ply(st.manifest.scene);
    return *st.input;
}

// The segmented scene if this session or an earlier one produced it,
// otherwise the ingested scene (which must then carry its own labels).
inline const GaussianScene& labeled_scene(PipelineState& st) {
    if (st.labeled) return *st.labeled;
    const std::filesystem::path p = st.out / "scene_labeled.ply";
    if (std::filesystem::exists(p)) {
        st.labeled = read_ply(p.string());
        st.labeled_source = "scene_labeled.ply";
    } else {
        st.labeled = input_scene(st);
        st.labeled_source = st.manifest.scene;
    }
    return *st.labeled;
}

inline std::filesystem::path labeled_scene_path(const PipelineState& st) {
    const std::filesystem::path p = st.out / "scene_labeled.ply";
    if (std::filesystem::exists(p)) return p;
    return st.manifest.scene;
}

inline const SceneBundle& scene_bundle(PipelineState& st) {
    if (!st.bundle) st.bundle = load_bundle(st.out.string());
    return *st.bundle;
}

inline const std::pair<ViewGrid, CandidateSet>& object_candidates(PipelineState& st, int id) {
    const auto it = st.candidates.find(id);
    if (it != st.candidates.end()) return it->second;
    const std::filesystem::path p =
        st.out / "occlude" / ("candidates_" + std::to_string(id) + ".json");
    if (!std::filesystem::exists(p))
        throw ValidationError("no occlusion candidates for instance " + std::to_string(id) +
                              "; run the occlude stage first");
    const nlohmann::json j = read_json_file(p);
    auto& slot = st.candidates[id];
    slot.first = view_grid_from_json(j.at("ring"));
    slot.second = candidate_set_from_json(j.at("candidates"));
    return slot;
}

// --- segment: recover instance labels from multi-view masks -----------------

inline void run_segment(PipelineState& st, const nlohmann::json& cfg, const Rng& rng,
                        nlohmann::json& record) {
    const std::string views = cfg.value("views", std::string("full"));
    const double view_radius = cfg.value("view_radius", 0.0);
    const int resolution = cfg.value("resolution", 96);
    const int steps = cfg.value("steps", 2000);
    const int batch = cfg.value("batch", 512);
    const double lift_lr = cfg.value("lift_lr", 1.0);
    const double similarity = cfg.value("similarity", 0.9);
    const int knn = cfg.value("knn", 16);
    const int erode = cfg.value("erode", 1);

    ViewKind kind;
    if (views == "front") {
        kind = ViewKind::kSceneFront;
    } else if (views == "full") {
        kind = ViewKind::kSceneFull;
    } else {
        throw ValidationError("segment views must be \"front\" or \"full\"");
    }

    const GaussianScene& src = input_scene(st);
    if (src.empty()) throw ValidationError("cannot segment an empty scene");
    if (!src.has_instances())
        throw ValidationError(
            "the input scene carries no instance labels to derive supervision masks from");
    note_input(record, st.manifest.scene, st.manifest.scene);

    GaussianScene lifted = src;
    // PLY files always carry the feature columns; all zeros means nothing has
    // been lifted yet, so let the lift apply its own initialization.
    if (lifted.has_features) {
        bool any = false;
        for (const Gaussian& g : lifted.gaussians) any = any || g.feature.norm() > 0.0;
        if (!any) lifted.has_features = false;
    }

    const BoundingSphere sphere = bounding_sphere(src);
    const double radius =
        view_radius > 0.0 ? view_radius : 2.0 * std::max(sphere.radius, 1e-6);
    ViewConfig vc;
    vc.width = resolution;
    vc.height = resolution;
    const ViewGrid grid = scene_viewpoints(kind, radius, sphere.center, vc);
    const MaskSet masks =
        masks_from_instance_renders(src, grid.poses, st.manifest.threads, erode);

    LiftConfig lc;
    lc.steps = steps;
    lc.batch_size = batch;
    lc.lr = lift_lr;
    lc.seed = rng.fork("lift").seed();
    const LiftReport report = lift_features(lifted, masks, lc);
    const ClusterResult clusters = cluster_instances(lifted, similarity, knn);
    apply_instance_labels(lifted, clusters.labels);

    write_ply(lifted, (st.out / "scene_labeled.ply").string());
    write_json_file(st.out / "segment.json",
                    {{"views", grid.poses.size()},
                     {"instances", clusters.count},
                     {"lift_steps", report.steps_run},
                     {"initial_probe_loss", report.initial_probe_loss},
                     {"final_probe_loss", report.final_probe_loss}});

    st.labeled = read_ply((st.out / "scene_labeled.ply").string());
    st.labeled_source = "scene_labeled.ply";
    st.bundle.reset();
    st.candidates.clear();
    st.composed.reset();

    record["config"] = {{"views", views},         {"view_radius", radius},
                        {"resolution", resolution}, {"steps", steps},
                        {"batch", batch},         {"lift_lr", lift_lr},
                        {"similarity", similarity}, {"knn", knn},
                        {"erode", erode}};
    note_output(st, record, "scene_labeled.ply");
    note_output(st, record, "segment.json");
}

// --- parse: split background, extract objects into a bundle ----------------

inline int boundary_background_instance(const GaussianScene& scene) {
    const Bounds3 bounds = position_bounds(scene);
    const double margin = 0.02 * (bounds.hi - bounds.lo).norm();
    std::map<int, std::size_t> counts;
    std::set<int> touching;
    for (const Gaussian& g : scene.gaussians) {
        if (!g.has_instance()) continue;
        counts[g.instance]++;
        for (int k = 0; k < 3; ++k) {
            if (g.position[k] - bounds.lo[k] <= margin ||
                bounds.hi[k] - g.position[k] <= margin) {
                touching.insert(g.instance);
                break;
            }
        }
    }
    int best = kNoInstance;
    std::size_t best_count = 0;
    for (const int id : touching) {
        if (counts[id] > best_count) {
            best = id;
            best_count = counts[id];
        }
    }
    if (best == kNoInstance)
        throw ValidationError(
            "no labeled instance touches the scene boundary; set an explicit background id");
    return best;
}

inline void run_parse(PipelineState& st, const nlohmann::json& cfg, const Rng&,
                      nlohmann::json& record) {
    const GaussianScene& scene = labeled_scene(st);
    note_input(record, st.labeled_source, labeled_scene_path(st));

    std::map<int, std::string> labels;
    if (cfg.contains("labels")) {
        if (!cfg.at("labels").is_object())
            throw ValidationError("parse labels must map instance ids to names");
        for (const auto& [key, value] : cfg.at("labels").items())
            labels[std::stoi(key)] = value.get<std::string>();
    }

    int bg_id = kNoInstance;
    std::string policy;
    if (st.manifest.background.is_string()) {
        policy = st.manifest.background.get<std::string>();
        if (policy == "boundary") bg_id = boundary_background_instance(scene);
    } else {
        policy = "instance";
        bg_id = st.manifest.background.get<int>();
        bool present = false;
        for (const Gaussian& g : scene.gaussians) present = present || g.instance == bg_id;
        if (!present)
            throw ValidationError("background instance " + std::to_string(bg_id) +
                                  " is not present in the scene");
    }

    GaussianScene background;
    background.background = scene.background;
    background.has_features = scene.has_features;
    GaussianScene foreground = background;
    for (const Gaussian& g : scene.gaussians) {
        const bool is_bg = !g.has_instance() || (bg_id != kNoInstance && g.instance == bg_id);
        (is_bg ? background : foreground).gaussians.push_back(g);
    }
    if (foreground.empty())
        throw ValidationError("the background policy leaves no labeled objects to extract");

    SceneBundle bundle;
    bundle.background = std::move(background);
    bundle.objects = extract_objects(foreground, labels);
    const std::vector<std::string> written = save_bundle(bundle, st.out.string());

    st.bundle = load_bundle(st.out.string());
    st.candidates.clear();
    st.composed.reset();

    record["config"] = {{"labels", cfg.value("labels", nlohmann::json::object())},
                        {"background_policy", policy},
                        {"background_instance", bg_id}};
    for (const std::string& rel : written) note_output(st, record, rel);
}

// --- occlude: pick per-quadrant candidate views per object -----------------

inline void run_occlude(PipelineState& st, const nlohmann::json& cfg, const Rng& rng,
                        nlohmann::json& record) {
    const int resolution = cfg.value("resolution", 128);
    const double window = cfg.value("window", 0.0);
    const double ring_radius = cfg.value("ring_radius", 0.0);

    const GaussianScene& scene = labeled_scene(st);
    const SceneBundle& bundle = scene_bundle(st);
    note_input(record, st.labeled_source, labeled_scene_path(st));
    note_input(record, "bundle.json", st.out / "bundle.json");

    const BoundingSphere scene_sphere = bounding_sphere(scene);
    std::filesystem::create_directories(st.out / "occlude");

    nlohmann::json summary = nlohmann::json::array();
    for (const ExtractedObject& o : bundle.objects) {
        const int id = o.source_instance;
        const GaussianScene placed = place_object(o.object, o.config);
        const BoundingSphere object_sphere = bounding_sphere(placed);
        const double object_radius = std::max(object_sphere.radius, 1e-6);
        // The ring must clear every gaussian in the scene so no content sits
        // behind the camera plane; the window stays object-scaled so the
        // footprint keeps useful resolution.
        const double reach =
            (scene_sphere.center - object_sphere.center).norm() + scene_sphere.radius;
        const double radius = ring_radius > 0.0
                                  ? ring_radius
                                  : std::max(1.8 * object_radius, 1.05 * std::max(reach, 1e-6));
        ViewConfig vc;
        vc.width = resolution;
        vc.height = resolution;
        vc.ortho_half_height = window > 0.0 ? window : 1.1 * object_radius;
        const ViewGrid ring = object_viewpoints(object_sphere.center, radius, vc);

        Rng draw = rng.fork("candidates", static_cast<std::uint64_t>(id));
        const CandidateSet set =
            select_candidates(scene, id, ring, draw, st.manifest.threads);

        const nlohmann::json doc = {{"schema", "splatkit-candidates/1"},
                                    {"target", id},
                                    {"ring", view_grid_to_json(ring)},
                                    {"candidates", candidate_set_to_json(set)}};
        const std::string rel = "occlude/candidates_" + std::to_string(id) + ".json";
        write_json_file(st.out / rel, doc);
        note_output(st, record, rel);

        auto& slot = st.candidates[id];
        slot.first = view_grid_from_json(doc.at("ring"));
        slot.second = candidate_set_from_json(doc.at("candidates"));

        int flagged = 0;
        for (const CandidateView& c : set.accepted) flagged += c.needs_completion ? 1 : 0;
        summary.push_back({{"instance", id},
                           {"ring_views", ring.poses.size()},
                           {"accepted", set.accepted.size()},
                           {"needs_completion", flagged},
                           {"dropped_regions", set.dropped_regions}});
    }
    write_json_file(st.out / "occlude/summary.json",
                    {{"schema", "splatkit-occlusion/1"}, {"objects", summary}});
    note_output(st, record, "occlude/summary.json");

    record["config"] = {{"resolution", resolution},
                        {"window", window},
                        {"ring_radius", ring_radius}};
}

// --- amodal_data: completion pairs, transition clips, lighting samples -----

inline void run_amodal_data(PipelineState& st, const nlohmann::json& cfg, const Rng& rng,
                            nlohmann::json& record) {
    const int frames = cfg.value("frames", kClipInterpolationFrames);
    const int frame_size = cfg.value("frame_size", 128);
    const bool only_flagged = cfg.value("only_flagged", true);

    const GaussianScene& scene = labeled_scene(st);
    const SceneBundle& bundle = scene_bundle(st);
    note_input(record, st.labeled_source, labeled_scene_path(st));
    note_input(record, "bundle.json", st.out / "bundle.json");
    std::filesystem::create_directories(st.out / "amodal");

    RenderOptions opts;
    opts.channels = channel::kColor;
    opts.threads = st.manifest.threads;

    nlohmann::json samples = nlohmann::json::array();
    for (const ExtractedObject& o : bundle.objects) {
        const int id = o.source_instance;
        const auto& [ring, set] = object_candidates(st, id);
        const std::string cand_rel = "occlude/candidates_" + std::to_string(id) + ".json";
        note_input(record, cand_rel, st.out / cand_rel);

        const std::vector<CandidateRender> renders =
            render_candidates(scene, id, ring, set, st.manifest.threads);
        Rng lighting_rng = rng.fork("lighting", static_cast<std::uint64_t>(id));

        for (std::size_t i = 0; i < set.accepted.size(); ++i) {
            const CandidateView& view = set.accepted[i];
            if (only_flagged && !view.needs_completion) continue;
            const CandidateRender& solo = renders[i];
            const RenderOutput full = render(scene, ring.poses[view.view], opts);

            AmodalPair pair;
            pair.whole_image = solo.color;
            pair.whole_mask = solo.whole;
            pair.occluded_image = full.color;
            // Clamp away rim pixels where the solo footprint thresholds
            // differently than the full render.
            pair.visible_mask = mask_and(solo.visible, solo.whole);
            pair.validate();

            const TransitionClip clip = make_transition_clip(pair, frames, frame_size, frame_size);
            const std::string base =
                "amodal/object_" + std::to_string(id) + "_view_" + std::to_string(view.view);
            write_clip_tensor(clip, (st.out / (base + "_clip.f32")).string(),
                              (st.out / (base + "_clip.json")).string());
            const LightingConfig lighting = sample_lighting(lighting_rng);
            write_json_file(st.out / (base + "_lighting.json"), lighting_to_json(lighting));
            note_output(st, record, base + "_clip.f32");
            note_output(st, record, base + "_clip.json");
            note_output(st, record, base + "_lighting.json");

            samples.push_back({{"instance", id},
                               {"view", view.view},
                               {"region", view.region},
                               {"needs_completion", view.needs_completion},
                               {"clip", base + "_clip.f32"},
                               {"clip_meta", base + "_clip.json"},
                               {"lighting", base + "_lighting.json"}});
        }
    }
    write_json_file(st.out / "amodal/index.json", {{"schema", "splatkit-amodal/1"},
                                                   {"frames", frames},
                                                   {"frame_size", frame_size},
                                                   {"samples", samples}});
    note_output(st, record, "amodal/index.json");

    record["config"] = {{"frames", frames},
                        {"frame_size", frame_size},
                        {"only_flagged", only_flagged}};
}

// --- regen: voxelize objects, encode latents, optional flow refinement -----

inline void run_regen(PipelineState& st, const nlohmann::json& cfg, const Rng& rng,
                      nlohmann::json& record) {
    const int voxel_resolution = cfg.value("voxel_resolution", 32);
    const int pool = cfg.value("pool", kLatentPool);
    const double injection_time = cfg.value("injection_time", kDefaultInjectionTime);
    const int sample_steps = cfg.value("sample_steps", kDefaultSampleSteps);

    const SceneBundle& bundle = scene_bundle(st);
    note_input(record, "bundle.json", st.out / "bundle.json");
    std::filesystem::create_directories(st.out / "regen");

    std::optional<FlowModel> model;
    if (cfg.contains("checkpoint")) {
        const std::string prefix = cfg.at("checkpoint").get<std::string>();
        model = load_flow_model(prefix + ".f32", prefix + ".json");
        note_input(record, prefix + ".f32", prefix + ".f32");
        note_input(record, prefix + ".json", prefix + ".json");
        if (voxel_resolution % pool != 0)
            throw ValidationError("voxel_resolution must be a multiple of pool");
        const int dim = voxel_resolution / pool;
        const int want = dim * dim * dim * kLatentChannels;
        if (model->w1.cols() != want)
            throw ValidationError(
                "flow checkpoint expects input dimension " + std::to_string(model->w1.cols()) +
                " but voxel_resolution " + std::to_string(voxel_resolution) + " with pool " +
                std::to_string(pool) + " yields " + std::to_string(want));
    }

    std::set<int> targets;
    if (cfg.contains("targets"))
        for (const nlohmann::json& t : cfg.at("targets")) targets.insert(t.get<int>());
    for (const int id : targets) {
        const bool known = std::any_of(bundle.objects.begin(), bundle.objects.end(),
                                       [&](const ExtractedObject& o) {
                                           return o.source_instance == id;
                                       });
        if (!known)
            throw ValidationError("regen targets reference unknown instance " +
                                  std::to_string(id));
    }

    nlohmann::json index = nlohmann::json::array();
    for (const ExtractedObject& o : bundle.objects) {
        const int id = o.source_instance;
        if (!targets.empty() && !targets.count(id)) continue;
        const std::string base = "regen/object_" + std::to_string(id);

        const VoxelGrid grid = voxelize(o.object, voxel_resolution);
        write_voxel_grid(grid, (st.out / (base + "_voxels.u8")).string(),
                         (st.out / (base + "_voxels.json")).string());
        const LatentGrid latent = encode_structure(grid, pool);
        write_latent_grid(latent, (st.out / (base + "_latent.f32")).string(),
                          (st.out / (base + "_latent.json")).string());
        for (const char* suffix : {"_voxels.u8", "_voxels.json", "_latent.f32", "_latent.json"})
            note_output(st, record, base + suffix);

        nlohmann::json entry = {{"instance", id},
                                {"voxels", base + "_voxels.u8"},
                                {"latent", base + "_latent.f32"},
                                {"occupied", grid.occupied_count()}};
        if (model) {
            Rng draw = rng.fork("inject", static_cast<std::uint64_t>(id));
            const LatentGrid refined =
                inject_prior_sample(*model, latent, injection_time, sample_steps, draw);
            const VoxelGrid decoded = decode_structure(refined, voxel_resolution);
            write_latent_grid(refined, (st.out / (base + "_refined.f32")).string(),
                              (st.out / (base + "_refined.json")).string());
            write_voxel_grid(decoded, (st.out / (base + "_decoded.u8")).string(),
                             (st.out / (base + "_decoded.json")).string());
            for (const char* suffix :
                 {"_refined.f32", "_refined.json", "_decoded.u8", "_decoded.json"})
                note_output(st, record, base + suffix);
            entry["refined"] = base + "_refined.f32";
            entry["decoded"] = base + "_decoded.u8";
            entry["decoded_iou"] = voxel_iou(grid, decoded);
        }
        index.push_back(std::move(entry));
    }
    write_json_file(st.out / "regen/index.json", {{"schema", "splatkit-regen/1"},
                                                  {"voxel_resolution", voxel_resolution},
                                                  {"pool", pool},
                                                  {"objects", index}});
    note_output(st, record, "regen/index.json");

    nlohmann::json effective = {{"voxel_resolution", voxel_resolution},
                                {"pool", pool},
                                {"injection_time", injection_time},
                                {"sample_steps", sample_steps}};
    if (cfg.contains("checkpoint")) effective["checkpoint"] = cfg.at("checkpoint");
    if (cfg.contains("targets")) effective["targets"] = cfg.at("targets");
    record["config"] = effective;
}

// --- compose: reassemble the scene, with optional edits --------------------

inline void run_compose(PipelineState& st, const nlohmann::json& cfg, const Rng&,
                        nlohmann::json& record) {
    SceneBundle working = scene_bundle(st);
    note_input(record, "bundle.json", st.out / "bundle.json");

    nlohmann::json swaps = cfg.value("swap", nlohmann::json::object());
    if (!swaps.is_object())
        throw ValidationError("compose swap must map instance ids to PLY paths");
    for (const auto& [key, value] : swaps.items()) {
        const int id = std::stoi(key);
        const std::string path = value.get<std::string>();
        const auto it = std::find_if(working.objects.begin(), working.objects.end(),
                                     [&](const ExtractedObject& o) {
                                         return o.source_instance == id;
                                     });
        if (it == working.objects.end())
            throw ValidationError("swap references unknown instance " + std::to_string(id));
        GaussianScene replacement = read_ply(path);
        if (replacement.empty())
            throw ValidationError("swap geometry is empty: " + path);
        for (Gaussian& g : replacement.gaussians) g.instance = id;
        it->object = std::move(replacement);
        note_input(record, path, path);
    }

    std::vector<int> drop;
    if (cfg.contains("drop"))
        for (const nlohmann::json& d : cfg.at("drop")) drop.push_back(d.get<int>());
    for (const int id : drop) {
        const auto it = std::find_if(working.objects.begin(), working.objects.end(),
                                     [&](const ExtractedObject& o) {
                                         return o.source_instance == id;
                                     });
        if (it == working.objects.end())
            throw ValidationError("drop references unknown instance " + std::to_string(id));
        working.objects.erase(it);
    }

    const GaussianScene composed = compose(working);
    write_ply(composed, (st.out / "composed.ply").string());
    st.composed = read_ply((st.out / "composed.ply").string());
    note_output(st, record, "composed.ply");

    record["config"] = {{"drop", drop}, {"swap", swaps}};
}

// --- render: one orbit view of the composed (or ingested) scene ------------

inline void run_render(PipelineState& st, const nlohmann::json& cfg, const Rng&,
                       nlohmann::json& record) {
    const double azimuth = cfg.value("azimuth", 30.0);
    const double elevation = cfg.value("elevation", 20.0);
    const double radius = cfg.value("radius", 0.0);
    const int resolution = cfg.value("resolution", 256);
    const double window = cfg.value("window", 0.0);
    const std::string source = cfg.value("source", std::string("auto"));
    const std::string name = cfg.value("name", std::string("view"));
    if (name.empty() || name.find_first_of("/\\") != std::string::npos)
        throw ValidationError("render name must be a bare file stem");

    const GaussianScene* scene = nullptr;
    std::string source_label;
    const std::filesystem::path composed_path = st.out / "composed.ply";
    const bool have_composed = st.composed.has_value() || std::filesystem::exists(composed_path);
    if (source == "composed" || (source == "auto" && have_composed)) {
        if (!have_composed)
            throw ValidationError("no composed scene available; run the compose stage first");
        if (!st.composed) st.composed = read_ply(composed_path.string());
        scene = &*st.composed;
        source_label = "composed.ply";
        note_input(record, source_label, composed_path);
    } else if (source == "labeled") {
        scene = &labeled_scene(st);
        source_label = st.labeled_source;
        note_input(record, source_label, labeled_scene_path(st));
    } else if (source == "input" || source == "auto") {
        scene = &input_scene(st);
        source_label = st.manifest.scene;
        note_input(record, source_label, st.manifest.scene);
    } else {
        throw ValidationError(
            "render source must be \"auto\", \"composed\", \"labeled\", or \"input\"");
    }
    if (scene->empty()) throw ValidationError("cannot render an empty scene");

    const BoundingSphere sphere = bounding_sphere(*scene);
    CameraPose cam;
    cam.projection = Projection::kOrthographic;
    cam.radius = radius > 0.0 ? radius : 2.0 * std::max(sphere.radius, 1e-6);
    cam.azimuth = deg_to_rad(azimuth);
    cam.elevation = std::min(deg_to_rad(elevation), kPi / 2);
    cam.look_at = sphere.center;
    cam.width = resolution;
    cam.height = resolution;
    cam.ortho_half_height = window > 0.0 ? window : 1.1 * std::max(sphere.radius, 1e-6);
    cam.validate();

    RenderOptions opts;
    opts.channels = channel::kColor;
    opts.threads = st.manifest.threads;
    const RenderOutput out = render(*scene, cam, opts);

    std::filesystem::create_directories(st.out / "render");
    const std::string rel = "render/" + name + ".png";
    write_png_rgb8((st.out / rel).string(), out.color);
    write_json_file(st.out / ("render/" + name + ".json"),
                    {{"camera", camera_to_json(cam)}, {"source", source_label}});
    note_output(st, record, rel);
    note_output(st, record, "render/" + name + ".json");

    record["config"] = {{"azimuth", azimuth},   {"elevation", elevation},
                        {"radius", cam.radius}, {"resolution", resolution},
                        {"window", cam.ortho_half_height}, {"source", source},
                        {"name", name}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline driver
// ---------------------------------------------------------------------------

struct PipelineResult {
    PipelineManifest manifest;
    nlohmann::json provenance;
    std::vector<std::string> stages_run;
};

// Runs the manifest's stages in order. Artifacts land under out_dir; stages
// not listed are satisfied from artifacts already on disk, so a manifest can
// re-run any suffix of the pipeline. The provenance log (one record per stage
// with config and input/output digests) is rewritten after every stage, so a
// failed run keeps the records and artifacts of everything that completed.
// Manifest problems throw ValidationError before any stage runs; failures
// inside a stage throw StageError carrying that stage's name.
inline PipelineResult run_pipeline(const PipelineManifest& manifest) {
    validate_manifest(manifest);
    detail::PipelineState st;
    st.manifest = manifest;
    st.out = manifest.out_dir;
    std::filesystem::create_directories(st.out);

    PipelineResult result;
    result.manifest = manifest;
    result.provenance = {{"schema", kProvenanceSchema},
                         {"manifest_digest", detail::json_digest(manifest_to_json(manifest))},
                         {"scene", manifest.scene},
                         {"seed", manifest.seed},
                         {"stages", nlohmann::json::array()}};
    const auto flush = [&]() {
        detail::write_json_file(st.out / "provenance.json", result.provenance);
    };

    Rng base(manifest.seed);
    for (const StageSpec& spec : manifest.stages) {
        nlohmann::json record = {{"stage", spec.name},
                                 {"inputs", nlohmann::json::object()},
                                 {"outputs", nlohmann::json::object()}};
        const nlohmann::json cfg =
            spec.config.is_null() ? nlohmann::json::object() : spec.config;
        try {
            const Rng stage_rng = base.fork(spec.name);
            if (spec.name == "segment") {
                detail::run_segment(st, cfg, stage_rng, record);
            } else if (spec.name == "parse") {
                detail::run_parse(st, cfg, stage_rng, record);
            } else if (spec.name == "occlude") {
                detail::run_occlude(st, cfg, stage_rng, record);
            } else if (spec.name == "amodal_data") {
                detail::run_amodal_data(st, cfg, stage_rng, record);
            } else if (spec.name == "regen") {
                detail::run_regen(st, cfg, stage_rng, record);
            } else if (spec.name == "compose") {
                detail::run_compose(st, cfg, stage_rng, record);
            } else if (spec.name == "render") {
                detail::run_render(st, cfg, stage_rng, record);
            }
        } catch (const StageError& e) {
            record["error"] = e.what();
            result.provenance["stages"].push_back(record);
            flush();
            if (e.stage() == spec.name) throw;
            throw StageError(spec.name, e.what());
        } catch (const std::exception& e) {
            record["error"] = e.what();
            result.provenance["stages"].push_back(record);
            flush();
            throw StageError(spec.name, e.what());
        }
        result.provenance["stages"].push_back(record);
        result.stages_run.push_back(spec.name);
        flush();
    }
    return result;
}

// Reads a manifest file, applies SPLATKIT_* environment overrides, and runs it.
inline PipelineResult run_pipeline_file(const std::string& manifest_path) {
    PipelineManifest m = manifest_from_json(detail::read_json_file(manifest_path));
    apply_env_overrides(m);
    return run_pipeline(m);
}

}  // namespace splatkit
