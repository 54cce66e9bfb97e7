// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "splatkit/amodal.hpp"
#include "splatkit/lighting.hpp"
#include "splatkit/occlusion.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/synth.hpp"

namespace splatkit {
namespace {

ImageF flat_image(int w, int h, double r, double g, double b) {
    ImageF img(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    }
    return img;
}

Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    Mask m(w, h, 1);
    for (int y = std::max(0, y0); y < std::min(h, y1); ++y)
        for (int x = std::max(0, x0); x < std::min(w, x1); ++x) m.at(x, y) = 1;
    return m;
}

// 32x32 object: gray background, orange square footprint in the middle.
MaskedImage square_object() {
    MaskedImage obj;
    obj.image = flat_image(32, 32, 0.2, 0.2, 0.2);
    obj.mask = rect_mask(32, 32, 8, 8, 24, 24);
    for (int y = 8; y < 24; ++y)
        for (int x = 8; x < 24; ++x) {
            obj.image.at(x, y, 0) = 0.9;
            obj.image.at(x, y, 1) = 0.5;
            obj.image.at(x, y, 2) = 0.1;
        }
    return obj;
}

MaskedImage blue_block(int w, int h) {
    MaskedImage occ;
    occ.image = flat_image(w, h, 0.1, 0.2, 0.8);
    occ.mask = rect_mask(w, h, 0, 0, w, h);
    return occ;
}

TEST(AmodalPairTest, ValidatesShapesAndSubset) {
    AmodalPair pair;
    pair.whole_image = flat_image(8, 8, 0.5, 0.5, 0.5);
    pair.occluded_image = pair.whole_image;
    pair.whole_mask = rect_mask(8, 8, 0, 0, 4, 4);
    pair.visible_mask = rect_mask(8, 8, 0, 0, 2, 4);
    EXPECT_NO_THROW(pair.validate());

    AmodalPair bad = pair;
    bad.occluded_image = flat_image(8, 6, 0.5, 0.5, 0.5);
    EXPECT_THROW(bad.validate(), ValidationError);

    bad = pair;
    bad.visible_mask = rect_mask(8, 8, 3, 0, 6, 4);  // pokes outside the footprint
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(CompositeOcclusionTest, NonOverlappingOccluderKeepsFootprint) {
    const MaskedImage obj = square_object();
    const MaskedImage occ = blue_block(6, 6);
    // Pasted into the top-left corner, away from the footprint.
    const AmodalPair pair = composite_occlusion(obj, occ, 0, 0);
    pair.validate();
    EXPECT_EQ(pair.visible_mask.raw(), pair.whole_mask.raw());
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const bool pasted = x < 6 && y < 6;
            for (int c = 0; c < 3; ++c) {
                if (pasted) {
                    EXPECT_EQ(pair.occluded_image.at(x, y, c), occ.image.at(x, y, c));
                } else {
                    EXPECT_EQ(pair.occluded_image.at(x, y, c), pair.whole_image.at(x, y, c));
                }
            }
            EXPECT_FALSE(pasted && pair.whole_mask.at(x, y) != 0);
        }
    }
}

TEST(CompositeOcclusionTest, HalfPlaneOccluderHalvesTheFootprint) {
    const MaskedImage obj = square_object();  // 16x16 footprint centered at x in [8,24)
    const MaskedImage occ = blue_block(16, 32);  // left half-plane at offset 0
    const AmodalPair pair = composite_occlusion(obj, occ, 0, 0);
    EXPECT_EQ(mask_area(pair.whole_mask), 256u);
    EXPECT_EQ(mask_area(pair.visible_mask), 128u);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (pair.visible_mask.at(x, y) != 0) EXPECT_GE(x, 16);
}

TEST(CompositeOcclusionTest, MatchesSetDifferenceOracle) {
    Rng rng(31);
    const MaskedImage obj = square_object();
    for (int trial = 0; trial < 20; ++trial) {
        const int w = 4 + static_cast<int>(rng.uniform_index(20));
        const int h = 4 + static_cast<int>(rng.uniform_index(20));
        const MaskedImage occ = blue_block(w, h);
        const int dx = static_cast<int>(rng.uniform_index(40)) - 10;
        const int dy = static_cast<int>(rng.uniform_index(40)) - 10;

        AmodalPair pair;
        try {
            pair = composite_occlusion(obj, occ, dx, dy);
        } catch (const StageError&) {
            continue;  // occluder swallowed the footprint in this draw
        }
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                const int ox = x - dx, oy = y - dy;
                const bool covered =
                    ox >= 0 && ox < w && oy >= 0 && oy < h && occ.mask.at(ox, oy) != 0;
                const bool expect_visible = obj.mask.at(x, y) != 0 && !covered;
                ASSERT_EQ(pair.visible_mask.at(x, y) != 0, expect_visible)
                    << "trial " << trial << " pixel " << x << "," << y;
                const double expect_r = covered ? occ.image.at(ox, oy, 0) : obj.image.at(x, y, 0);
                ASSERT_EQ(pair.occluded_image.at(x, y, 0), expect_r);
            }
        }
    }
}

TEST(CompositeOcclusionTest, FullCoverThrowsNoVisibleSupport) {
    const MaskedImage obj = square_object();
    const MaskedImage occ = blue_block(32, 32);
    try {
        composite_occlusion(obj, occ, 0, 0);
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "amodal_data");
        EXPECT_NE(std::string(e.what()).find("no visible support"), std::string::npos);
    }
}

TEST(CompositeOcclusionTest, RejectsEmptyOccluderMask) {
    const MaskedImage obj = square_object();
    MaskedImage occ = blue_block(8, 8);
    occ.mask = Mask(8, 8, 1);  // all zero
    EXPECT_THROW(composite_occlusion(obj, occ, 0, 0), ValidationError);
}

// Clip built at source resolution so resize is the identity and values can be
// checked against the blend formula exactly.
TransitionClip source_size_clip(const AmodalPair& pair, int n) {
    return make_transition_clip(pair, n, pair.whole_image.width(), pair.whole_image.height());
}

TEST(TransitionClipTest, UnoccludedPairGivesConstantClip) {
    MaskedImage obj = square_object();
    const AmodalPair pair = composite_occlusion(obj, blue_block(4, 4), 0, 0);
    ASSERT_EQ(pair.visible_mask.raw(), pair.whole_mask.raw());
    const TransitionClip clip = source_size_clip(pair, 4);
    ASSERT_EQ(clip.frames.size(), 5u);
    ASSERT_EQ(clip.alphas.size(), 4u);
    for (const ImageF& f : clip.frames) EXPECT_EQ(f.raw(), clip.frames.front().raw());
}

TEST(TransitionClipTest, BlendFollowsTheLinearSchedule) {
    const MaskedImage obj = square_object();
    const AmodalPair pair = composite_occlusion(obj, blue_block(16, 32), 0, 0);
    const int n = 6;
    const TransitionClip clip = source_size_clip(pair, n);
    ASSERT_EQ(clip.frames.size(), static_cast<std::size_t>(n) + 1);

    // Inside the difference region the value walks linearly from the occluded
    // appearance to the complete one; outside it every frame shows the whole
    // image.
    const Mask diff = mask_minus(pair.whole_mask, pair.visible_mask);
    ASSERT_GT(mask_area(diff), 0u);
    for (int i = 0; i < n; ++i) {
        const double alpha = 1.0 - static_cast<double>(i) / (n - 1);
        EXPECT_DOUBLE_EQ(clip.alphas[static_cast<std::size_t>(i)], alpha);
        const ImageF& frame = clip.frames[static_cast<std::size_t>(i) + 1];
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                for (int c = 0; c < 3; ++c) {
                    const double a = pair.occluded_image.at(x, y, c);
                    const double b = pair.whole_image.at(x, y, c);
                    const double expect =
                        diff.at(x, y) != 0 ? alpha * a + (1.0 - alpha) * b : b;
                    ASSERT_NEAR(frame.at(x, y, c), 2.0 * expect - 1.0, 1e-12);
                }
            }
        }
    }

    // Endpoints: frame 1 shows the occluded appearance over the difference
    // region; the final frame equals the complete-object first frame exactly.
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (diff.at(x, y) != 0)
                EXPECT_EQ(clip.frames[1].at(x, y, 2), 2.0 * pair.occluded_image.at(x, y, 2) - 1.0);
    EXPECT_EQ(clip.frames.back().raw(), clip.frames.front().raw());
}

TEST(TransitionClipTest, DissolveIsMonotonePerPixel) {
    const MaskedImage obj = square_object();
    const AmodalPair pair = composite_occlusion(obj, blue_block(16, 32), 0, 0);
    const TransitionClip clip = source_size_clip(pair, 8);
    const Mask diff = mask_minus(pair.whole_mask, pair.visible_mask);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            if (diff.at(x, y) == 0) continue;
            for (int c = 0; c < 3; ++c) {
                const double a = pair.occluded_image.at(x, y, c);
                const double b = pair.whole_image.at(x, y, c);
                if (a == b) continue;
                for (std::size_t i = 2; i < clip.frames.size(); ++i) {
                    const double prev = clip.frames[i - 1].at(x, y, c);
                    const double cur = clip.frames[i].at(x, y, c);
                    if (a > b) {
                        ASSERT_LE(cur, prev);
                    } else {
                        ASSERT_GE(cur, prev);
                    }
                }
            }
        }
    }
}

TEST(TransitionClipTest, DefaultsProduceStandardFrames) {
    const MaskedImage obj = square_object();
    const AmodalPair pair = composite_occlusion(obj, blue_block(16, 32), 0, 0);
    const TransitionClip clip = make_transition_clip(pair);
    EXPECT_EQ(clip.interpolation_frames, 8);
    ASSERT_EQ(clip.frames.size(), 9u);
    EXPECT_EQ(clip.width(), 512);
    EXPECT_EQ(clip.height(), 512);
    for (const ImageF& f : clip.frames)
        for (const double v : f.raw()) {
            ASSERT_GE(v, -1.0);
            ASSERT_LE(v, 1.0);
        }
}

TEST(TransitionClipTest, RejectsDegenerateFrameCounts) {
    const MaskedImage obj = square_object();
    const AmodalPair pair = composite_occlusion(obj, blue_block(16, 32), 0, 0);
    EXPECT_THROW(make_transition_clip(pair, 1), ValidationError);
    EXPECT_THROW(make_transition_clip(pair, 8, 0, 512), ValidationError);
}

TEST(TransitionClipTest, BuildsFromRenderedOcclusionMasks) {
    // End-to-end data path: render the two-box occlusion scene, take the
    // whole/visible masks from the geometric occlusion analysis, and check
    // that a structurally valid clip comes out.
    Rng rng(1);
    const GaussianScene scene = synth_scene(two_box_occlusion_spec(0.6), rng);
    CameraPose cam;
    cam.projection = Projection::kOrthographic;
    cam.radius = 4.0;
    cam.width = cam.height = 128;
    cam.ortho_half_height = 0.8;

    const VisibilityMasks masks = visibility_masks(scene, 0, cam);
    ASSERT_TRUE(mask_subset(masks.visible, masks.whole));
    AmodalPair pair;
    pair.whole_image = render(filter_by_instance(scene, 0), cam, {channel::kColor}).color;
    pair.occluded_image = render(scene, cam, {channel::kColor}).color;
    pair.whole_mask = masks.whole;
    pair.visible_mask = masks.visible;

    const TransitionClip clip = make_transition_clip(pair, 8, 128, 128);
    ASSERT_EQ(clip.frames.size(), 9u);
    EXPECT_EQ(clip.frames.back().raw(), clip.frames.front().raw());
    EXPECT_NE(clip.frames[1].raw(), clip.frames.back().raw());  // occlusion dissolves
}

TEST(TransitionClipTest, TensorExportRoundTrips) {
    const MaskedImage obj = square_object();
    const AmodalPair pair = composite_occlusion(obj, blue_block(16, 32), 0, 0);
    const TransitionClip clip = source_size_clip(pair, 4);

    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "splatkit_amodal_test";
    std::filesystem::create_directories(dir);
    const std::string data = (dir / "clip.f32").string();
    const std::string header = (dir / "clip.json").string();
    write_clip_tensor(clip, data, header);
    const auto [shape, values] = read_raw_f32(data, header);
    ASSERT_EQ(shape, (std::vector<int>{5, 32, 32, 3}));
    const std::vector<double> expect = clip_to_tensor(clip);
    ASSERT_EQ(values.size(), expect.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        ASSERT_NEAR(values[i], expect[i], 1e-6);  // stored as float32

    const nlohmann::json meta = write_clip_frames(clip, dir.string(), "clip");
    EXPECT_EQ(meta.at("interpolation_frames").get<int>(), 4);
    EXPECT_EQ(meta.at("frame_files").size(), 5u);
    const ImageF first = read_png_rgb8((dir / "clip_frame_0.png").string());
    ASSERT_EQ(first.width(), 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            ASSERT_NEAR(first.at(x, y, 0), 0.5 * (clip.frames[0].at(x, y, 0) + 1.0), 0.5 / 255.0);
    std::filesystem::remove_all(dir);
}

TEST(LightingTest, AreaBranchSamplesAllRanges) {
    Rng rng(2);  // first uniform draw lands above the sun-branch cut
    const LightingConfig cfg = sample_lighting(rng);
    ASSERT_EQ(cfg.kind, LightingConfig::Kind::kArea);
    EXPECT_GE(cfg.area.radius, 4.0);
    EXPECT_LT(cfg.area.radius, 6.0);
    EXPECT_GE(cfg.area.energy, 800.0);
    EXPECT_LT(cfg.area.energy, 1200.0);
    EXPECT_GE(cfg.area.size, 0.8);
    EXPECT_LT(cfg.area.size, 1.2);
    EXPECT_GE(cfg.area.elevation_deg, 40.0);
    EXPECT_LT(cfg.area.elevation_deg, 89.9);
    EXPECT_GE(cfg.area.azimuth_deg, 0.0);
    EXPECT_LT(cfg.area.azimuth_deg, 360.0);
}

TEST(LightingTest, SunBranchUsesTheFixedRig) {
    Rng rng(0);  // first uniform draw lands below the sun-branch cut
    const LightingConfig cfg = sample_lighting(rng);
    ASSERT_EQ(cfg.kind, LightingConfig::Kind::kSun);
    EXPECT_GE(cfg.sun.angle, 0.1);
    EXPECT_LT(cfg.sun.angle, 0.5);
    ASSERT_EQ(cfg.sun.lights.size(), 4u);
    EXPECT_EQ(cfg.sun.lights[0].energy, 5.0);
    EXPECT_EQ(cfg.sun.lights[0].x_rotation_deg, 0.0);
    for (int i = 1; i < 4; ++i) {
        EXPECT_EQ(cfg.sun.lights[static_cast<std::size_t>(i)].energy, 3.0);
        EXPECT_EQ(cfg.sun.lights[static_cast<std::size_t>(i)].x_rotation_deg, 90.0 * i);
    }
}

TEST(LightingTest, AreaFrequencyMatchesTheBranchProbability) {
    Rng rng(123);
    int area = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        area += sample_lighting(rng).kind == LightingConfig::Kind::kArea;
    const double freq = static_cast<double>(area) / n;
    EXPECT_NEAR(freq, 0.8, 0.02);
}

TEST(LightingTest, RangesHoldOverManySamples) {
    Rng rng(77);
    for (int i = 0; i < 100000; ++i) {
        const LightingConfig cfg = sample_lighting(rng);
        if (cfg.kind == LightingConfig::Kind::kArea) {
            ASSERT_GE(cfg.area.radius, 4.0);
            ASSERT_LE(cfg.area.radius, 6.0);
            ASSERT_GE(cfg.area.energy, 800.0);
            ASSERT_LE(cfg.area.energy, 1200.0);
            ASSERT_GE(cfg.area.size, 0.8);
            ASSERT_LE(cfg.area.size, 1.2);
            ASSERT_GE(cfg.area.elevation_deg, 40.0);
            ASSERT_LE(cfg.area.elevation_deg, 89.9);
            ASSERT_GE(cfg.area.azimuth_deg, 0.0);
            ASSERT_LT(cfg.area.azimuth_deg, 360.0);
        } else {
            ASSERT_GE(cfg.sun.angle, 0.1);
            ASSERT_LE(cfg.sun.angle, 0.5);
            ASSERT_EQ(cfg.sun.lights.size(), 4u);
        }
    }
}

TEST(LightingTest, JsonRoundTripsBothKinds) {
    Rng area_rng(2), sun_rng(0);
    for (Rng* rng : {&area_rng, &sun_rng}) {
        const LightingConfig cfg = sample_lighting(*rng);
        const LightingConfig back = lighting_from_json(lighting_to_json(cfg));
        ASSERT_EQ(back.kind, cfg.kind);
        if (cfg.kind == LightingConfig::Kind::kArea) {
            EXPECT_EQ(back.area.radius, cfg.area.radius);
            EXPECT_EQ(back.area.energy, cfg.area.energy);
            EXPECT_EQ(back.area.size, cfg.area.size);
            EXPECT_EQ(back.area.elevation_deg, cfg.area.elevation_deg);
            EXPECT_EQ(back.area.azimuth_deg, cfg.area.azimuth_deg);
        } else {
            EXPECT_EQ(back.sun.angle, cfg.sun.angle);
            ASSERT_EQ(back.sun.lights.size(), cfg.sun.lights.size());
            for (std::size_t i = 0; i < back.sun.lights.size(); ++i) {
                EXPECT_EQ(back.sun.lights[i].energy, cfg.sun.lights[i].energy);
                EXPECT_EQ(back.sun.lights[i].x_rotation_deg, cfg.sun.lights[i].x_rotation_deg);
            }
        }
    }
}

TEST(LightingTest, FixedSeedReproducesTheConfig) {
    Rng a(9), b(9);
    for (int i = 0; i < 50; ++i) {
        const LightingConfig x = sample_lighting(a);
        const LightingConfig y = sample_lighting(b);
        ASSERT_EQ(lighting_to_json(x).dump(), lighting_to_json(y).dump());
    }
}

TEST(MiouTest, MatchesAnalyticCases) {
    const Mask a = rect_mask(16, 16, 0, 0, 8, 8);
    const Mask b = rect_mask(16, 16, 8, 8, 16, 16);
    EXPECT_EQ(amodal_miou({a}, {a}), 1.0);
    EXPECT_EQ(amodal_miou({a}, {b}), 0.0);

    // Two 8x8 squares overlapping half their area: IoU = 32 / 96.
    const Mask c = rect_mask(16, 16, 4, 0, 12, 8);
    EXPECT_DOUBLE_EQ(amodal_miou({a}, {c}), 1.0 / 3.0);

    // A both-empty pair counts as a perfect match.
    const Mask empty(16, 16, 1);
    EXPECT_EQ(amodal_miou({empty}, {empty}), 1.0);
    EXPECT_DOUBLE_EQ(amodal_miou({a, empty}, {b, empty}), 0.5);
}

TEST(MiouTest, SymmetricAndBounded) {
    Rng rng(5);
    std::vector<Mask> lhs, rhs;
    for (int i = 0; i < 10; ++i) {
        Mask a(20, 20, 1), b(20, 20, 1);
        for (std::size_t k = 0; k < a.raw().size(); ++k) {
            a.raw()[k] = rng.uniform() < 0.3;
            b.raw()[k] = rng.uniform() < 0.3;
        }
        lhs.push_back(a);
        rhs.push_back(b);
    }
    const double forward = amodal_miou(lhs, rhs);
    EXPECT_EQ(forward, amodal_miou(rhs, lhs));
    EXPECT_GE(forward, 0.0);
    EXPECT_LE(forward, 1.0);
}

TEST(MiouTest, RejectsMismatchedInputs) {
    const Mask a = rect_mask(16, 16, 0, 0, 8, 8);
    const Mask small = rect_mask(8, 8, 0, 0, 4, 4);
    EXPECT_THROW(amodal_miou({a}, {a, a}), ValidationError);
    EXPECT_THROW(amodal_miou({a}, {small}), ValidationError);
    EXPECT_THROW(amodal_miou({}, {}), ValidationError);
}

}  // namespace
}  // namespace splatkit
