// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/common.hpp"
#include "splatkit/rng.hpp"

namespace splatkit {

// Randomized render-lighting setups, emitted as JSON for downstream
// renderers. With probability 0.8 an area light is placed with uniformly
// sampled radius/energy/size/elevation/azimuth; otherwise a four-way sun rig
// with a shared softness angle: one primary light plus three fill lights
// rotated about the x axis.
struct AreaLightConfig {
    double radius = 0.0;         // [4, 6]
    double energy = 0.0;         // [800, 1200]
    double size = 0.0;           // [0.8, 1.2]
    double elevation_deg = 0.0;  // [40, 89.9]
    double azimuth_deg = 0.0;    // [0, 360)
};

struct SunLightConfig {
    struct Element {
        double energy = 0.0;
        double x_rotation_deg = 0.0;
    };
    double angle = 0.0;  // softness, [0.1, 0.5]
    std::vector<Element> lights;
};

struct LightingConfig {
    enum class Kind { kArea, kSun };
    Kind kind = Kind::kArea;
    AreaLightConfig area;
    SunLightConfig sun;
};

inline constexpr double kSunBranchProbability = 0.2;

inline LightingConfig sample_lighting(Rng& rng) {
    LightingConfig cfg;
    const double p = rng.uniform();
    if (p > kSunBranchProbability) {
        cfg.kind = LightingConfig::Kind::kArea;
        cfg.area.radius = rng.uniform(4.0, 6.0);
        cfg.area.energy = rng.uniform(800.0, 1200.0);
        cfg.area.size = rng.uniform(0.8, 1.2);
        cfg.area.elevation_deg = rng.uniform(40.0, 89.9);
        cfg.area.azimuth_deg = rng.uniform(0.0, 360.0);
    } else {
        cfg.kind = LightingConfig::Kind::kSun;
        cfg.sun.angle = rng.uniform(0.1, 0.5);
        cfg.sun.lights = {{5.0, 0.0}, {3.0, 90.0}, {3.0, 180.0}, {3.0, 270.0}};
    }
    return cfg;
}

inline nlohmann::json lighting_to_json(const LightingConfig& cfg) {
    if (cfg.kind == LightingConfig::Kind::kArea) {
        return {{"type", "area"},
                {"radius", cfg.area.radius},
                {"energy", cfg.area.energy},
                {"size", cfg.area.size},
                {"elevation_deg", cfg.area.elevation_deg},
                {"azimuth_deg", cfg.area.azimuth_deg}};
    }
    nlohmann::json lights = nlohmann::json::array();
    for (const auto& l : cfg.sun.lights)
        lights.push_back({{"energy", l.energy}, {"x_rotation_deg", l.x_rotation_deg}});
    return {{"type", "sun"}, {"angle", cfg.sun.angle}, {"lights", lights}};
}

inline LightingConfig lighting_from_json(const nlohmann::json& j) {
    LightingConfig cfg;
    const std::string type = j.at("type").get<std::string>();
    if (type == "area") {
        cfg.kind = LightingConfig::Kind::kArea;
        cfg.area.radius = j.at("radius").get<double>();
        cfg.area.energy = j.at("energy").get<double>();
        cfg.area.size = j.at("size").get<double>();
        cfg.area.elevation_deg = j.at("elevation_deg").get<double>();
        cfg.area.azimuth_deg = j.at("azimuth_deg").get<double>();
        return cfg;
    }
    if (type != "sun") throw ValidationError("unknown lighting type: " + type);
    cfg.kind = LightingConfig::Kind::kSun;
    cfg.sun.angle = j.at("angle").get<double>();
    for (const auto& l : j.at("lights"))
        cfg.sun.lights.push_back(
            {l.at("energy").get<double>(), l.at("x_rotation_deg").get<double>()});
    return cfg;
}

}  // namespace splatkit
