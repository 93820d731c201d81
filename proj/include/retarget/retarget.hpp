#pragma once

#include "retarget/causal_regression.hpp"
#include "retarget/core_data.hpp"
#include "retarget/error.hpp"
#include "retarget/nuisance.hpp"
#include "retarget/policy_learning.hpp"
#include "retarget/pseudo_outcome.hpp"
#include "retarget/retargeting.hpp"
#include "retarget/scenario.hpp"
#include "retarget/simulation.hpp"
