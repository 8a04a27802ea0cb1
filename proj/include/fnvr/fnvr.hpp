#pragma once

// umbrella header

#include "fnvr/adam.hpp"
#include "fnvr/analytic_sdf.hpp"
#include "fnvr/autodiff.hpp"
#include "fnvr/checkpoint.hpp"
#include "fnvr/common.hpp"
#include "fnvr/dataset.hpp"
#include "fnvr/deformation.hpp"
#include "fnvr/fields.hpp"
#include "fnvr/geometry.hpp"
#include "fnvr/image.hpp"
#include "fnvr/image_io.hpp"
#include "fnvr/losses.hpp"
#include "fnvr/marching_cubes.hpp"
#include "fnvr/metrics.hpp"
#include "fnvr/params.hpp"
#include "fnvr/rendering.hpp"
#include "fnvr/scene.hpp"
#include "fnvr/tensor.hpp"
#include "fnvr/tracking.hpp"
#include "fnvr/trainer.hpp"
#include "fnvr/trainer_build.hpp"
