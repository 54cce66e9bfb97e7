// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/render.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/viewgen.hpp"

namespace splatkit {

// Fraction of an object's solo footprint lost to other content; views at or
// past this threshold are too occluded to use.
inline constexpr double kOcclusionThreshold = 0.4;

// unoccluded: nothing blocks the object. complete: partially blocked but
// recoverable by amodal completion. reject: too much of it is hidden.
enum class OcclusionVerdict { kUnoccluded, kComplete, kReject };

inline std::string to_string(OcclusionVerdict v) {
    switch (v) {
        case OcclusionVerdict::kUnoccluded: return "unoccluded";
        case OcclusionVerdict::kComplete: return "complete";
        case OcclusionVerdict::kReject: return "reject";
    }
    throw ValidationError("unknown occlusion verdict");
}

inline OcclusionVerdict occlusion_verdict_from_string(const std::string& s) {
    if (s == "unoccluded") return OcclusionVerdict::kUnoccluded;
    if (s == "complete") return OcclusionVerdict::kComplete;
    if (s == "reject") return OcclusionVerdict::kReject;
    throw ValidationError("unknown occlusion verdict: " + s);
}

inline OcclusionVerdict occlusion_verdict(double rho) {
    if (rho >= kOcclusionThreshold) return OcclusionVerdict::kReject;
    if (rho > 0.0) return OcclusionVerdict::kComplete;
    return OcclusionVerdict::kUnoccluded;
}

struct OcclusionReport {
    int view = -1;               // pose index when tested as part of a ring
    long long area_target = 0;   // pixels the object wins in the full render
    long long area_other = 0;    // solo-footprint pixels lost to other content
    double rho = 0.0;            // area_other / (area_other + area_target)
    OcclusionVerdict verdict = OcclusionVerdict::kUnoccluded;
    bool observable = true;      // false when the object has no footprint at all
};

// Masks for one pose: the object's footprint when rendered alone (alpha > 0.5)
// and the pixels it actually wins in the full-scene render.
struct VisibilityMasks {
    Mask whole;
    Mask visible;
};

inline VisibilityMasks visibility_masks(const GaussianScene& scene, int target,
                                        const CameraPose& cam, int threads = 1) {
    const GaussianScene solo = filter_by_instance(scene, target);
    if (solo.empty())
        throw ValidationError("no gaussians carry instance " + std::to_string(target));

    const ImageF solo_alpha = render(solo, cam, {channel::kAlpha, threads}).alpha;
    const LabelImage winners = render(scene, cam, {channel::kInstance, threads}).instance_map;

    VisibilityMasks m{Mask(cam.width, cam.height, 1), Mask(cam.width, cam.height, 1)};
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            m.whole.at(x, y) = solo_alpha.at(x, y) > 0.5 ? 1 : 0;
            m.visible.at(x, y) = winners.at(x, y) == target ? 1 : 0;
        }
    }
    return m;
}

// Measures how occluded `target` is from `cam`. The occlusion ratio compares
// the pixels the object loses to other content against the pixels it wins:
//   area_target = footprint it wins in the full render,
//   area_other  = solo footprint (alpha > 0.5 rendered alone) won by others,
//   rho         = area_other / (area_other + area_target).
// An object with no footprint at all reports rho = 0 but observable = false.
inline OcclusionReport occlusion_test(const GaussianScene& scene, int target,
                                      const CameraPose& cam, int threads = 1) {
    const VisibilityMasks m = visibility_masks(scene, target, cam, threads);

    OcclusionReport report;
    report.area_target = static_cast<long long>(mask_area(m.visible));
    report.area_other = static_cast<long long>(mask_area(mask_minus(m.whole, m.visible)));
    const long long denom = report.area_target + report.area_other;
    if (denom > 0) {
        report.rho = static_cast<double>(report.area_other) / static_cast<double>(denom);
        report.verdict = occlusion_verdict(report.rho);
    } else {
        report.observable = false;
        report.verdict = OcclusionVerdict::kUnoccluded;
    }
    return report;
}

struct CandidateView {
    int view = -1;    // pose index into the ring
    int region = -1;  // quadrant the view was drawn from
    OcclusionReport report;
    bool needs_completion = false;  // partially occluded; run amodal completion
};

struct CandidateSet {
    int target = kNoInstance;
    std::vector<CandidateView> accepted;  // at most one per region, region order
    std::vector<int> dropped_regions;     // quadrants with no usable view
};

// Picks one usable view per ring quadrant. Within each region, views are
// tried in random order without replacement until one is not rejected (and
// actually shows the object); a region where every view fails is dropped.
// Draws from `rng` are the same for every region regardless of where the
// first acceptable view lands, so results are reproducible under a fixed
// seed. Throws if all four regions drop.
inline CandidateSet select_candidates(const GaussianScene& scene, int target,
                                      const ViewGrid& ring, Rng& rng, int threads = 1) {
    const auto regions = partition_regions(ring);

    CandidateSet set;
    set.target = target;
    for (int r = 0; r < 4; ++r) {
        std::vector<int> order = regions[static_cast<std::size_t>(r)];
        rng.shuffle(order);
        bool found = false;
        for (const int view : order) {
            OcclusionReport report =
                occlusion_test(scene, target, ring.poses[static_cast<std::size_t>(view)], threads);
            report.view = view;
            if (!report.observable || report.verdict == OcclusionVerdict::kReject) continue;
            CandidateView c;
            c.view = view;
            c.region = r;
            c.report = report;
            c.needs_completion = report.verdict == OcclusionVerdict::kComplete;
            set.accepted.push_back(c);
            found = true;
            break;
        }
        if (!found) set.dropped_regions.push_back(r);
    }
    if (set.accepted.empty())
        throw StageError("parse", "object " + std::to_string(target) +
                                      " unobservable: every candidate view is occluded");
    return set;
}

// One candidate image: the object rendered alone from an accepted pose, with
// its solo footprint and the pixels it keeps once the rest of the scene is
// present. visible is empty of overlap exactly where occluders win.
struct CandidateRender {
    int view = -1;
    ImageF color;  // object alone over the scene background
    ImageF alpha;
    Mask whole;
    Mask visible;
};

inline std::vector<CandidateRender> render_candidates(const GaussianScene& scene, int target,
                                                      const ViewGrid& ring,
                                                      const CandidateSet& set,
                                                      int threads = 1) {
    if (set.target != target)
        throw ValidationError("candidate set was selected for a different instance");
    const GaussianScene solo = filter_by_instance(scene, target);
    if (solo.empty())
        throw ValidationError("no gaussians carry instance " + std::to_string(target));

    std::vector<CandidateRender> out;
    out.reserve(set.accepted.size());
    for (const CandidateView& c : set.accepted) {
        if (c.view < 0 || c.view >= static_cast<int>(ring.poses.size()))
            throw ValidationError("candidate view index out of range");
        const CameraPose& cam = ring.poses[static_cast<std::size_t>(c.view)];

        CandidateRender r;
        r.view = c.view;
        const RenderOutput solo_out =
            render(solo, cam, {channel::kColor | channel::kAlpha, threads});
        r.color = solo_out.color;
        r.alpha = solo_out.alpha;
        const VisibilityMasks m = visibility_masks(scene, target, cam, threads);
        r.whole = m.whole;
        r.visible = m.visible;
        out.push_back(std::move(r));
    }
    return out;
}

inline nlohmann::json occlusion_report_to_json(const OcclusionReport& r) {
    return {{"view", r.view},
            {"area_target", r.area_target},
            {"area_other", r.area_other},
            {"rho", r.rho},
            {"verdict", to_string(r.verdict)},
            {"observable", r.observable}};
}

inline OcclusionReport occlusion_report_from_json(const nlohmann::json& j) {
    OcclusionReport r;
    r.view = j.at("view").get<int>();
    r.area_target = j.at("area_target").get<long long>();
    r.area_other = j.at("area_other").get<long long>();
    r.rho = j.at("rho").get<double>();
    r.verdict = occlusion_verdict_from_string(j.at("verdict").get<std::string>());
    r.observable = j.at("observable").get<bool>();
    return r;
}

inline nlohmann::json candidate_set_to_json(const CandidateSet& set) {
    nlohmann::json accepted = nlohmann::json::array();
    for (const CandidateView& c : set.accepted) {
        accepted.push_back({{"view", c.view},
                            {"region", c.region},
                            {"report", occlusion_report_to_json(c.report)},
                            {"needs_completion", c.needs_completion}});
    }
    return {{"target", set.target},
            {"accepted", accepted},
            {"dropped_regions", set.dropped_regions}};
}

inline CandidateSet candidate_set_from_json(const nlohmann::json& j) {
    CandidateSet set;
    set.target = j.at("target").get<int>();
    for (const auto& e : j.at("accepted")) {
        CandidateView c;
        c.view = e.at("view").get<int>();
        c.region = e.at("region").get<int>();
        c.report = occlusion_report_from_json(e.at("report"));
        c.needs_completion = e.at("needs_completion").get<bool>();
        set.accepted.push_back(c);
    }
    set.dropped_regions = j.at("dropped_regions").get<std::vector<int>>();
    return set;
}

}  // namespace splatkit
