#pragma once

#include "spgd/diagnostics.hpp"
#include "spgd/error.hpp"
#include "spgd/guidance.hpp"
#include "spgd/image.hpp"
#include "spgd/metrics.hpp"
#include "spgd/operator.hpp"
#include "spgd/prior.hpp"
#include "spgd/rng.hpp"
#include "spgd/sampler.hpp"
#include "spgd/schedule.hpp"
#include "spgd/trajectory.hpp"
#include "spgd/types.hpp"
