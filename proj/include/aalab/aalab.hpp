#pragma once

// Umbrella header.
#include "aalab/ambient.hpp"
#include "aalab/charts.hpp"
#include "aalab/error.hpp"
#include "aalab/fixtures.hpp"
#include "aalab/ghlimit.hpp"
#include "aalab/graphrep.hpp"
#include "aalab/grid.hpp"
#include "aalab/holder.hpp"
#include "aalab/io.hpp"
#include "aalab/linalg.hpp"
#include "aalab/metrics.hpp"
#include "aalab/parallel.hpp"
#include "aalab/scenarios.hpp"
#include "aalab/submanifold.hpp"
#include "aalab/tensor.hpp"
