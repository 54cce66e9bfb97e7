// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splatkit {

// Bad inputs and broken invariants. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A pipeline stage failed mid-run. The CLI maps this to exit code 3.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

inline constexpr int kFeatureDim = 16;

// Instance label for unlabeled gaussians and background pixels.
inline constexpr int kNoInstance = -1;

}  // namespace splatkit
