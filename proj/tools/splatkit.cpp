// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "splatkit/splatkit.hpp"

namespace {

using splatkit::PipelineManifest;
using splatkit::PipelineResult;
using splatkit::StageSpec;
using splatkit::ValidationError;

// Shared options for the single-stage subcommands.
struct StageCli {
    std::string scene;
    std::string out;
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<std::string> sets;  // key=value stage config overrides
};

void add_common_options(CLI::App* sub, StageCli& o) {
    sub->add_option("--scene", o.scene, "input gaussian-splat PLY")->required();
    sub->add_option("--out", o.out, "working directory for pipeline artifacts")->required();
    sub->add_option("--seed", o.seed, "random seed (default 0)");
    sub->add_option("--threads", o.threads, "worker threads (default 1)");
    sub->add_option("--set", o.sets,
                    "stage config override, key=value (value parsed as JSON when possible)");
}

nlohmann::json stage_config_from_sets(const std::vector<std::string>& sets,
                                      nlohmann::json config = nlohmann::json::object()) {
    for (const std::string& kv : sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ValidationError("--set expects key=value, got \"" + kv + "\"");
        config[kv.substr(0, eq)] = splatkit::detail::env_json_value(kv.substr(eq + 1));
    }
    return config;
}

void report_run(const PipelineResult& result) {
    for (const nlohmann::json& rec : result.provenance.at("stages")) {
        std::cout << "stage " << rec.at("stage").get<std::string>() << ": ok ("
                  << rec.at("outputs").size() << " files)\n";
    }
    std::cout << "artifacts in " << result.manifest.out_dir << '\n';
}

void run_one_stage(const std::string& stage, const StageCli& o, nlohmann::json config) {
    PipelineManifest m;
    m.scene = o.scene;
    m.out_dir = o.out;
    m.seed = o.seed;
    m.threads = o.threads;
    m.stages = {StageSpec{stage, stage_config_from_sets(o.sets, std::move(config))}};
    splatkit::apply_env_overrides(m);
    report_run(splatkit::run_pipeline(m));
}

splatkit::Mask mask_from_png(const std::string& path) {
    const splatkit::ImageF gray = splatkit::read_png_gray8(path);
    splatkit::Mask mask(gray.width(), gray.height(), 1);
    for (std::size_t i = 0; i < gray.raw().size(); ++i)
        mask.raw()[i] = gray.raw()[i] > 0.5 ? 1 : 0;
    return mask;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"splatkit: parse gaussian-splat scenes into editable objects, curate "
                 "amodal-completion data, and regenerate object structure"};
    app.require_subcommand(1);

    // synth -----------------------------------------------------------------
    std::string synth_spec_path, synth_preset, synth_out;
    std::uint64_t synth_seed = 0;
    double synth_offset = 0.6;
    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic test scene");
    auto* spec_opt = synth->add_option("--spec", synth_spec_path, "scene layout JSON");
    synth->add_option("--preset", synth_preset, "built-in layout: room or two-box")
        ->check(CLI::IsMember({"room", "two-box"}))
        ->excludes(spec_opt);
    synth->add_option("--out", synth_out, "output PLY path")->required();
    synth->add_option("--seed", synth_seed, "random seed (default 0)");
    synth->add_option("--offset", synth_offset,
                      "lateral offset for the two-box preset (default 0.6)");
    synth->callback([&] {
        splatkit::SynthSpec spec;
        if (!synth_spec_path.empty()) {
            spec = splatkit::synth_spec_from_json(
                splatkit::detail::read_json_file(synth_spec_path));
        } else if (synth_preset == "room") {
            spec = splatkit::room_spec();
        } else if (synth_preset == "two-box") {
            spec = splatkit::two_box_occlusion_spec(synth_offset);
        } else {
            throw ValidationError("synth needs --spec or --preset");
        }
        splatkit::Rng rng(synth_seed);
        const splatkit::GaussianScene scene = splatkit::synth_scene(spec, rng);
        splatkit::write_ply(scene, synth_out);
        std::cout << "wrote " << scene.size() << " gaussians to " << synth_out << '\n';
    });

    // run -------------------------------------------------------------------
    std::string manifest_path;
    auto* run = app.add_subcommand("run", "run a pipeline manifest");
    run->add_option("--manifest", manifest_path, "manifest JSON path")->required();
    run->callback([&] { report_run(splatkit::run_pipeline_file(manifest_path)); });

    // single-stage subcommands ----------------------------------------------
    StageCli segment_cli;
    auto* segment = app.add_subcommand(
        "segment", "lift per-gaussian features from multi-view masks and cluster instances");
    add_common_options(segment, segment_cli);
    segment->callback([&] { run_one_stage("segment", segment_cli, {}); });

    StageCli parse_cli;
    std::string parse_background;
    auto* parse = app.add_subcommand(
        "parse", "split the background and extract labeled objects into a scene bundle");
    add_common_options(parse, parse_cli);
    parse->add_option("--background", parse_background,
                      "background policy: unlabeled, boundary, or an instance id");
    parse->callback([&] {
        PipelineManifest m;
        m.scene = parse_cli.scene;
        m.out_dir = parse_cli.out;
        m.seed = parse_cli.seed;
        m.threads = parse_cli.threads;
        if (!parse_background.empty())
            m.background = splatkit::detail::env_json_value(parse_background);
        m.stages = {StageSpec{"parse", stage_config_from_sets(parse_cli.sets)}};
        splatkit::apply_env_overrides(m);
        report_run(splatkit::run_pipeline(m));
    });

    StageCli occlude_cli;
    auto* occlude = app.add_subcommand(
        "occlude", "score occlusion per object over a view ring and pick candidate views");
    add_common_options(occlude, occlude_cli);
    occlude->callback([&] { run_one_stage("occlude", occlude_cli, {}); });

    StageCli amodal_cli;
    auto* amodal = app.add_subcommand(
        "amodal-data", "build amodal completion pairs, transition clips, and lighting samples");
    add_common_options(amodal, amodal_cli);
    amodal->callback([&] { run_one_stage("amodal_data", amodal_cli, {}); });

    StageCli regen_cli;
    std::string regen_checkpoint;
    auto* regen = app.add_subcommand(
        "regen", "voxelize objects, encode structure latents, optionally refine with a flow model");
    add_common_options(regen, regen_cli);
    regen->add_option("--checkpoint", regen_checkpoint,
                      "flow model path prefix (expects <prefix>.f32 and <prefix>.json)");
    regen->callback([&] {
        nlohmann::json config = nlohmann::json::object();
        if (!regen_checkpoint.empty()) config["checkpoint"] = regen_checkpoint;
        run_one_stage("regen", regen_cli, std::move(config));
    });

    StageCli compose_cli;
    std::vector<int> compose_drop;
    std::vector<std::string> compose_swap;
    auto* compose = app.add_subcommand(
        "compose", "reassemble the scene from the bundle, with optional drop/swap edits");
    add_common_options(compose, compose_cli);
    compose->add_option("--drop", compose_drop, "instance ids to leave out");
    compose->add_option("--swap", compose_swap,
                        "replace an object's local geometry, id=path.ply");
    compose->callback([&] {
        nlohmann::json config = nlohmann::json::object();
        if (!compose_drop.empty()) config["drop"] = compose_drop;
        if (!compose_swap.empty()) {
            nlohmann::json swaps = nlohmann::json::object();
            for (const std::string& kv : compose_swap) {
                const std::size_t eq = kv.find('=');
                if (eq == std::string::npos || eq == 0)
                    throw ValidationError("--swap expects id=path, got \"" + kv + "\"");
                swaps[kv.substr(0, eq)] = kv.substr(eq + 1);
            }
            config["swap"] = swaps;
        }
        run_one_stage("compose", compose_cli, std::move(config));
    });

    StageCli render_cli;
    auto* render = app.add_subcommand("render", "render an orbit view of the scene to PNG");
    add_common_options(render, render_cli);
    render->callback([&] { run_one_stage("render", render_cli, {}); });

    // eval-miou -------------------------------------------------------------
    std::vector<std::string> pred_paths, truth_paths;
    auto* eval = app.add_subcommand("eval-miou",
                                    "mean IoU between predicted and reference binary masks");
    eval->add_option("--pred", pred_paths, "predicted mask PNG (repeatable)")->required();
    eval->add_option("--truth", truth_paths, "reference mask PNG (repeatable)")->required();
    eval->callback([&] {
        std::vector<splatkit::Mask> pred, truth;
        for (const std::string& p : pred_paths) pred.push_back(mask_from_png(p));
        for (const std::string& p : truth_paths) truth.push_back(mask_from_png(p));
        const double value = splatkit::amodal_miou(pred, truth);
        std::cout.precision(6);
        std::cout << std::fixed << value << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const splatkit::StageError& e) {
        std::cerr << "splatkit: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "splatkit: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
