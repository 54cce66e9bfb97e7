// Copyright Contributors to the splatkit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatkit/amodal.hpp"
#include "splatkit/camera.hpp"
#include "splatkit/cluster.hpp"
#include "splatkit/common.hpp"
#include "splatkit/contrastive.hpp"
#include "splatkit/flow.hpp"
#include "splatkit/gaussian.hpp"
#include "splatkit/image.hpp"
#include "splatkit/io/ply.hpp"
#include "splatkit/io/png.hpp"
#include "splatkit/io/raw.hpp"
#include "splatkit/lift.hpp"
#include "splatkit/lighting.hpp"
#include "splatkit/math.hpp"
#include "splatkit/objects.hpp"
#include "splatkit/occlusion.hpp"
#include "splatkit/parallel.hpp"
#include "splatkit/pipeline.hpp"
#include "splatkit/projection.hpp"
#include "splatkit/render.hpp"
#include "splatkit/rng.hpp"
#include "splatkit/synth.hpp"
#include "splatkit/viewgen.hpp"
#include "splatkit/voxel.hpp"
