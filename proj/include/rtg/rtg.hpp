#pragma once

#include "rtg/error.hpp"
#include "rtg/graph.hpp"
#include "rtg/harness.hpp"
#include "rtg/io.hpp"
#include "rtg/metrics.hpp"
#include "rtg/mlp.hpp"
#include "rtg/pattern.hpp"
#include "rtg/regions.hpp"
#include "rtg/spectral.hpp"
#include "rtg/verify.hpp"
