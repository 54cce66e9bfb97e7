// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "splatkit/io/png.hpp"
#include "splatkit/io/ply.hpp"
#include "splatkit/io/raw.hpp"
#include "splatkit/rng.hpp"
#include "testutil.hpp"

namespace splatkit {
namespace {

namespace fs = std::filesystem;

class IoTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("splatkit_io_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

TEST_F(IoTest, PlyRoundTripPreservesSceneWithinFloatPrecision) {
    Rng rng(31);
    GaussianScene scene = test::random_scene(rng, 25, 3);
    scene.background = Vec3(0.15, 0.35, 0.55);
    scene.gaussians[0].instance = kNoInstance;
    scene.gaussians[1].opacity = 0.0;  // clamped by the logit encoding
    scene.gaussians[2].opacity = 1.0;

    write_ply(scene, path("scene.ply"));
    const GaussianScene back = read_ply(path("scene.ply"));

    ASSERT_EQ(back.size(), scene.size());
    EXPECT_TRUE(back.has_features);
    EXPECT_LE((back.background - scene.background).norm(), 1e-6);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian& a = scene.gaussians[i];
        const Gaussian& b = back.gaussians[i];
        EXPECT_LE((a.position - b.position).norm(), 1e-5);
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(b.scale[k], a.scale[k], 1e-5 * a.scale[k]);
            EXPECT_NEAR(b.color[k], a.color[k], 1e-6);
        }
        EXPECT_NEAR(b.opacity, std::clamp(a.opacity, 1e-7, 1.0 - 1e-7), 2e-5);
        // Same rotation up to the q / -q ambiguity.
        EXPECT_GE(std::abs(a.rotation.dot(b.rotation)), 1.0 - 1e-9);
        EXPECT_LE((a.feature - b.feature).norm(), 1e-5);
        EXPECT_EQ(b.instance, a.instance);
    }
}

TEST_F(IoTest, PlyReaderAcceptsForeignPropertyOrderAndUnknownFields) {
    // A hand-built file in a different layout: normals first, interleaved
    // unknown properties, geometry fields in scrambled order.
    std::ofstream out(path("foreign.ply"), std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex 1\n"
        << "property float nx\nproperty float ny\nproperty float nz\n"
        << "property float opacity\n"
        << "property float rot_3\nproperty float rot_2\nproperty float rot_1\n"
        << "property float rot_0\n"
        << "property double z\nproperty double y\nproperty double x\n"
        << "property float scale_2\nproperty float scale_1\nproperty float scale_0\n"
        << "property float f_dc_2\nproperty float f_dc_1\nproperty float f_dc_0\n"
        << "end_header\n";
    const auto wf = [&](float v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    const auto wd = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    wf(0);
    wf(0);
    wf(1);                          // normals, ignored
    wf(0.0f);                       // opacity logit -> 0.5
    wf(0);
    wf(0);
    wf(0);
    wf(1);                          // rot_3..rot_0 -> identity (w = 1 last)
    wd(3.0);
    wd(2.0);
    wd(1.0);                        // z, y, x
    wf(std::log(0.5f));
    wf(std::log(0.25f));
    wf(std::log(0.125f));           // scale_2..0
    wf(static_cast<float>((0.9 - 0.5) / kShC0));
    wf(static_cast<float>((0.6 - 0.5) / kShC0));
    wf(static_cast<float>((0.3 - 0.5) / kShC0));  // f_dc_2..0
    out.close();

    const GaussianScene scene = read_ply(path("foreign.ply"));
    ASSERT_EQ(scene.size(), 1u);
    EXPECT_FALSE(scene.has_features);
    const Gaussian& g = scene.gaussians[0];
    EXPECT_LE((g.position - Vec3(1, 2, 3)).norm(), 1e-12);
    EXPECT_NEAR(g.opacity, 0.5, 1e-7);
    EXPECT_LE((g.scale - Vec3(0.125, 0.25, 0.5)).norm(), 1e-6);
    EXPECT_NEAR(g.color.x(), 0.3, 1e-6);
    EXPECT_NEAR(g.color.y(), 0.6, 1e-6);
    EXPECT_NEAR(g.color.z(), 0.9, 1e-6);
    EXPECT_NEAR(std::abs(g.rotation.w()), 1.0, 1e-6);
    EXPECT_EQ(g.instance, kNoInstance);
}

TEST_F(IoTest, PlyRejectsMalformedFiles) {
    {
        std::ofstream out(path("notply.ply"), std::ios::binary);
        out << "off\n1 2 3\n";
    }
    EXPECT_THROW(read_ply(path("notply.ply")), ValidationError);

    {
        std::ofstream out(path("ascii.ply"), std::ios::binary);
        out << "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
    }
    EXPECT_THROW(read_ply(path("ascii.ply")), ValidationError);

    {
        std::ofstream out(path("missing.ply"), std::ios::binary);
        out << "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
            << "property float x\nproperty float y\nend_header\n";
        const float v = 0;
        out.write(reinterpret_cast<const char*>(&v), 4);
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    EXPECT_THROW(read_ply(path("missing.ply")), ValidationError);

    Rng rng(32);
    const GaussianScene scene = test::random_scene(rng, 4);
    write_ply(scene, path("trunc.ply"));
    const auto full = fs::file_size(path("trunc.ply"));
    fs::resize_file(path("trunc.ply"), full - 10);
    EXPECT_THROW(read_ply(path("trunc.ply")), ValidationError);
}

TEST_F(IoTest, PngColorRoundTripWithinQuantization) {
    Rng rng(33);
    ImageF img(20, 14, 3);
    for (double& v : img.raw()) v = rng.uniform();
    write_png_rgb8(path("c.png"), img);
    const ImageF back = read_png_rgb8(path("c.png"));
    ASSERT_TRUE(back.same_shape(img));
    EXPECT_LE(test::max_abs_diff(back, img), 0.5 / 255.0 + 1e-12);
}

TEST_F(IoTest, PngGray8RoundTripWithinQuantization) {
    Rng rng(34);
    ImageF img(9, 17, 1);
    for (double& v : img.raw()) v = rng.uniform();
    write_png_gray8(path("a.png"), img);
    const ImageF back = read_png_gray8(path("a.png"));
    EXPECT_LE(test::max_abs_diff(back, img), 0.5 / 255.0 + 1e-12);
}

TEST_F(IoTest, PngGray16RoundTripExact) {
    Rng rng(35);
    Image<std::uint16_t> img(23, 11, 1);
    for (auto& v : img.raw()) v = static_cast<std::uint16_t>(rng.uniform_index(65536));
    write_png_gray16(path("g16.png"), img);
    const auto back = read_png_gray16(path("g16.png"));
    EXPECT_EQ(back.raw(), img.raw());
}

TEST_F(IoTest, DepthRoundTripWithinQuantizationAndKeepsInfinity) {
    Rng rng(36);
    ImageF depth(31, 22, 1);
    for (double& v : depth.raw())
        v = rng.uniform() < 0.3 ? std::numeric_limits<double>::infinity()
                                : rng.uniform(2.0, 7.0);
    write_depth_png16(path("d.png"), path("d.json"), depth);
    const ImageF back = read_depth_png16(path("d.png"), path("d.json"));
    ASSERT_TRUE(back.same_shape(depth));
    const double step = 5.0 / 65534.0;
    for (std::size_t i = 0; i < depth.raw().size(); ++i) {
        if (std::isinf(depth.raw()[i])) {
            EXPECT_TRUE(std::isinf(back.raw()[i]));
        } else {
            EXPECT_NEAR(back.raw()[i], depth.raw()[i], step);
        }
    }
}

TEST_F(IoTest, LabelPngRoundTripExactWithSentinel) {
    LabelImage labels(7, 5, 1);
    for (std::size_t i = 0; i < labels.raw().size(); ++i)
        labels.raw()[i] = static_cast<std::int32_t>(i % 4) - 1;  // includes -1
    labels.at(3, 3, 0) = 65534;
    write_label_png16(path("l.png"), labels);
    const LabelImage back = read_label_png16(path("l.png"));
    EXPECT_EQ(back.raw(), labels.raw());

    labels.at(0, 0, 0) = 70000;
    EXPECT_THROW(write_label_png16(path("l2.png"), labels), ValidationError);
}

TEST_F(IoTest, RawImageRoundTripWithinFloatPrecision) {
    Rng rng(37);
    ImageF img(13, 9, kFeatureDim);
    for (double& v : img.raw()) v = rng.normal();
    write_raw_image(path("f.bin"), path("f.json"), img);
    const ImageF back = read_raw_image(path("f.bin"), path("f.json"));
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.raw().size(); ++i)
        EXPECT_NEAR(back.raw()[i], img.raw()[i], 1e-6 * std::max(1.0, std::abs(img.raw()[i])));
}

TEST_F(IoTest, RawLabelsRoundTripExact) {
    LabelImage labels(6, 4, 1);
    for (std::size_t i = 0; i < labels.raw().size(); ++i)
        labels.raw()[i] = static_cast<std::int32_t>(i) * 7 - 1;
    write_raw_labels(path("l.bin"), path("l.json"), labels);
    const LabelImage back = read_raw_labels(path("l.bin"), path("l.json"));
    EXPECT_EQ(back.raw(), labels.raw());
}

TEST_F(IoTest, RawTensorRejectsMismatchedSizes) {
    EXPECT_THROW(write_raw_f32(path("t.bin"), path("t.json"), {2, 3}, {1.0, 2.0}),
                 ValidationError);
    write_raw_f32(path("t.bin"), path("t.json"), {2, 3}, {1, 2, 3, 4, 5, 6});
    fs::resize_file(path("t.bin"), 8);
    EXPECT_THROW(read_raw_f32(path("t.bin"), path("t.json")), ValidationError);
    // dtype mismatch
    write_raw_i32(path("i.bin"), path("i.json"), {4}, {1, 2, 3, 4});
    EXPECT_THROW(read_raw_f32(path("i.bin"), path("i.json")), ValidationError);
}

}  // namespace
}  // namespace splatkit
