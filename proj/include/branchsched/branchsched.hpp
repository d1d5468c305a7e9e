#pragma once

// Umbrella header for the adaptive branch scheduling library.

#include "branchsched/accuracy_model.hpp"
#include "branchsched/branch.hpp"
#include "branchsched/contention.hpp"
#include "branchsched/errors.hpp"
#include "branchsched/latency_model.hpp"
#include "branchsched/profiler.hpp"
#include "branchsched/scheduler.hpp"
#include "branchsched/simulation.hpp"
#include "branchsched/stressor.hpp"
#include "branchsched/trace.hpp"
#include "branchsched/world_model.hpp"
