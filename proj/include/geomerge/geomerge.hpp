#pragma once
// Umbrella header: the full adapter-merging toolkit.

#include "geomerge/core.hpp"
#include "geomerge/linalg.hpp"
#include "geomerge/stiefel.hpp"
#include "geomerge/spd.hpp"
#include "geomerge/cayley.hpp"
#include "geomerge/quotient.hpp"
#include "geomerge/frechet.hpp"
#include "geomerge/lift.hpp"
#include "geomerge/baselines.hpp"
#include "geomerge/toy.hpp"
#include "geomerge/bundle.hpp"
#include "geomerge/selfcheck.hpp"
