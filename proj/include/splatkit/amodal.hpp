// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatkit/image.hpp"
#include "splatkit/io/png.hpp"
#include "splatkit/io/raw.hpp"

namespace splatkit {

inline constexpr int kClipInterpolationFrames = 8;
inline constexpr int kClipFrameSize = 512;

// One occlusion training example: the complete object appearance with its
// full footprint, and the same view with an occluder pasted on top, keeping
// only the still-visible part of the footprint.
struct AmodalPair {
    ImageF whole_image;     // H x W x 3, complete object
    Mask whole_mask;        // full footprint
    ImageF occluded_image;  // H x W x 3, occluder composited over the object
    Mask visible_mask;      // footprint minus the occluder; subset of whole_mask

    void validate() const {
        if (whole_image.empty() || whole_image.channels() != 3)
            throw ValidationError("amodal pair needs 3-channel images");
        if (!whole_image.same_shape(occluded_image))
            throw ValidationError("amodal pair images differ in shape");
        if (whole_mask.width() != whole_image.width() ||
            whole_mask.height() != whole_image.height() || whole_mask.channels() != 1 ||
            !whole_mask.same_shape(visible_mask))
            throw ValidationError("amodal pair masks do not match the images");
        if (!mask_subset(visible_mask, whole_mask))
            throw ValidationError("visible mask must be a subset of the whole mask");
    }
};

struct MaskedImage {
    ImageF image;  // H x W x 3
    Mask mask;     // H x W
};

// Pastes the occluder over the object image. The occluder is shifted by
// (dx, dy) in pixels and clipped to the object frame; wherever its mask
// lands, the occluded image takes the occluder's pixels and the visible mask
// loses them.
inline AmodalPair composite_occlusion(const MaskedImage& object, const MaskedImage& occluder,
                                      int dx = 0, int dy = 0) {
    const auto check = [](const MaskedImage& m, const char* name) {
        if (m.image.empty() || m.image.channels() != 3)
            throw ValidationError(std::string(name) + " image must be H x W x 3");
        if (m.mask.width() != m.image.width() || m.mask.height() != m.image.height() ||
            m.mask.channels() != 1)
            throw ValidationError(std::string(name) + " mask does not match its image");
    };
    check(object, "object");
    check(occluder, "occluder");
    if (mask_area(occluder.mask) == 0) throw ValidationError("occluder mask is empty");

    AmodalPair out;
    out.whole_image = object.image;
    out.whole_mask = object.mask;
    out.occluded_image = object.image;
    out.visible_mask = object.mask;
    for (int y = 0; y < object.image.height(); ++y) {
        const int oy = y - dy;
        if (oy < 0 || oy >= occluder.image.height()) continue;
        for (int x = 0; x < object.image.width(); ++x) {
            const int ox = x - dx;
            if (ox < 0 || ox >= occluder.image.width()) continue;
            if (occluder.mask.at(ox, oy) == 0) continue;
            for (int c = 0; c < 3; ++c)
                out.occluded_image.at(x, y, c) = occluder.image.at(ox, oy, c);
            out.visible_mask.at(x, y) = 0;
        }
    }
    if (mask_area(out.visible_mask) == 0)
        throw StageError("amodal_data", "occluder covers the whole object: no visible support");
    return out;
}

// Frames that dissolve an occlusion: the first frame shows the complete
// object; the following N frames blend from the occluded appearance back to
// the complete one inside the difference region (footprint pixels the
// occluder took), with blend weight 1 - i/(N-1) at interpolation frame i.
// Frames are resized to a fixed size and mapped from [0,1] to [-1,1].
struct TransitionClip {
    int interpolation_frames = 0;  // N; the clip holds N+1 frames
    std::vector<double> alphas;    // per interpolation frame, 1 -> 0
    std::vector<ImageF> frames;

    int width() const { return frames.empty() ? 0 : frames.front().width(); }
    int height() const { return frames.empty() ? 0 : frames.front().height(); }
};

namespace detail {

inline ImageF to_signed_range(ImageF img) {
    for (double& v : img.raw()) v = 2.0 * v - 1.0;
    return img;
}

}  // namespace detail

inline TransitionClip make_transition_clip(const AmodalPair& pair,
                                           int n = kClipInterpolationFrames,
                                           int frame_width = kClipFrameSize,
                                           int frame_height = kClipFrameSize) {
    pair.validate();
    if (n < 2) throw ValidationError("a transition clip needs at least 2 interpolation frames");
    if (frame_width < 1 || frame_height < 1)
        throw ValidationError("clip frame size must be positive");

    const Mask diff = mask_minus(pair.whole_mask, pair.visible_mask);
    const int w = pair.whole_image.width();
    const int h = pair.whole_image.height();

    TransitionClip clip;
    clip.interpolation_frames = n;
    clip.frames.reserve(static_cast<std::size_t>(n) + 1);
    clip.frames.push_back(
        detail::to_signed_range(resize_bilinear(pair.whole_image, frame_width, frame_height)));
    for (int i = 0; i < n; ++i) {
        const double alpha = 1.0 - static_cast<double>(i) / (n - 1);
        clip.alphas.push_back(alpha);
        ImageF blended(w, h, 3);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double m = diff.at(x, y) != 0 ? alpha : 0.0;
                for (int c = 0; c < 3; ++c)
                    blended.at(x, y, c) =
                        m * pair.occluded_image.at(x, y, c) + (1.0 - m) * pair.whole_image.at(x, y, c);
            }
        }
        clip.frames.push_back(
            detail::to_signed_range(resize_bilinear(blended, frame_width, frame_height)));
    }
    return clip;
}

// Clip as one flat row-major tensor [frames, height, width, 3].
inline std::vector<double> clip_to_tensor(const TransitionClip& clip) {
    std::vector<double> out;
    out.reserve(clip.frames.size() * (clip.frames.empty() ? 0 : clip.frames.front().size()));
    for (const ImageF& f : clip.frames) out.insert(out.end(), f.raw().begin(), f.raw().end());
    return out;
}

inline void write_clip_tensor(const TransitionClip& clip, const std::string& data_path,
                              const std::string& json_path) {
    if (clip.frames.empty()) throw ValidationError("cannot export an empty clip");
    write_raw_f32(data_path, json_path,
                  {static_cast<int>(clip.frames.size()), clip.height(), clip.width(), 3},
                  clip_to_tensor(clip));
}

// Numbered 8-bit frames plus a metadata sidecar. PNG cannot hold negative
// values, so frames are mapped back from [-1,1] to [0,1] on export.
inline nlohmann::json write_clip_frames(const TransitionClip& clip, const std::string& directory,
                                        const std::string& stem) {
    if (clip.frames.empty()) throw ValidationError("cannot export an empty clip");
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < clip.frames.size(); ++i) {
        ImageF unit = clip.frames[i];
        for (double& v : unit.raw()) v = 0.5 * (v + 1.0);
        const std::string name = stem + "_frame_" + std::to_string(i) + ".png";
        write_png_rgb8(directory + "/" + name, unit);
        files.push_back(name);
    }
    const nlohmann::json meta = {{"interpolation_frames", clip.interpolation_frames},
                                 {"width", clip.width()},
                                 {"height", clip.height()},
                                 {"alphas", clip.alphas},
                                 {"frame_files", files},
                                 {"value_range", {-1.0, 1.0}}};
    return meta;
}

inline double mask_iou(const Mask& a, const Mask& b) {
    if (!a.same_shape(b)) throw ValidationError("mask dimensions differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.raw().size(); ++i) {
        const bool pa = a.raw()[i] != 0, pb = b.raw()[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Mean intersection-over-union across mask pairs; a pair where both masks
// are empty counts as 1.
inline double amodal_miou(const std::vector<Mask>& pred, const std::vector<Mask>& truth) {
    if (pred.size() != truth.size()) throw ValidationError("mask list lengths differ");
    if (pred.empty()) throw ValidationError("mIoU needs at least one mask pair");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += mask_iou(pred[i], truth[i]);
    return sum / static_cast<double>(pred.size());
}

}  // namespace splatkit
