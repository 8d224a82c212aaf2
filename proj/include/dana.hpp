#pragma once

#include "dana/common.hpp"
#include "dana/dsl.hpp"
#include "dana/engine.hpp"
#include "dana/hdfg.hpp"
#include "dana/pageio.hpp"
#include "dana/plan.hpp"
#include "dana/planner.hpp"
#include "dana/reference.hpp"
#include "dana/runtime.hpp"
#include "dana/scheduler.hpp"
#include "dana/strider.hpp"
