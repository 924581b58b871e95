#pragma once

// Library headers; the command layer (cli.hpp) is separate because it pulls
// in CLI11.
#include "flowkit/config.hpp"
#include "flowkit/ergodic.hpp"
#include "flowkit/errors.hpp"
#include "flowkit/flow.hpp"
#include "flowkit/geometry.hpp"
#include "flowkit/grid.hpp"
#include "flowkit/invariants.hpp"
#include "flowkit/linalg.hpp"
#include "flowkit/observables.hpp"
#include "flowkit/regularity.hpp"
#include "flowkit/report.hpp"
#include "flowkit/sensitivity.hpp"
#include "flowkit/state_space.hpp"
#include "flowkit/systems.hpp"
#include "flowkit/zimmer.hpp"
