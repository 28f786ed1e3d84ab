#pragma once

#include "fsp/attack.hpp"
#include "fsp/baselines.hpp"
#include "fsp/dataset.hpp"
#include "fsp/harness.hpp"
#include "fsp/learners.hpp"
#include "fsp/metrics.hpp"
