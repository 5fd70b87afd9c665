// SPDX-License-Identifier: Apache-2.0
#pragma once

// Umbrella header: simulation and viability analysis for hybrid systems
// with continuous-time inputs.

#include "hysim/errors.hpp"
#include "hysim/hybrid_time.hpp"
#include "hysim/interval.hpp"
#include "hysim/io.hpp"
#include "hysim/linalg.hpp"
#include "hysim/scenarios.hpp"
#include "hysim/sets.hpp"
#include "hysim/signal.hpp"
#include "hysim/simulator.hpp"
#include "hysim/system.hpp"
#include "hysim/viability.hpp"
