#pragma once

#include "lifshitz/error.hpp"
#include "lifshitz/rng.hpp"
#include "lifshitz/lattice_sums.hpp"
#include "lifshitz/lattice.hpp"
#include "lifshitz/banded_ldlt.hpp"
#include "lifshitz/spectral.hpp"
#include "lifshitz/disorder.hpp"
#include "lifshitz/parallel.hpp"
#include "lifshitz/stats.hpp"
#include "lifshitz/concentration.hpp"
#include "lifshitz/perturbation.hpp"
#include "lifshitz/ids.hpp"
#include "lifshitz/lifshitz_analysis.hpp"
#include "lifshitz/config.hpp"
#include "lifshitz/persist.hpp"
#include "lifshitz/svg.hpp"
#include "lifshitz/runner.hpp"
