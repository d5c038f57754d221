#pragma once

#include "posefuse/error.hpp"
#include "posefuse/rng.hpp"
#include "posefuse/parallel.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/kdtree.hpp"
#include "posefuse/object_model.hpp"
#include "posefuse/tessellation.hpp"
#include "posefuse/codec.hpp"
#include "posefuse/metrics.hpp"
#include "posefuse/multiview.hpp"
#include "posefuse/simharness.hpp"
#include "posefuse/io.hpp"
