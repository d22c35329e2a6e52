#pragma once

// Umbrella header for the hyper1d library: characteristic-integral transport
// operators, initial-boundary and time-periodic solvers, smoothing
// diagnostics, and the mode-space Fredholm machinery for one-dimensional
// first-order hyperbolic systems.

#include "hyper1d/util.hpp"
#include "hyper1d/expr.hpp"
#include "hyper1d/system.hpp"
#include "hyper1d/characteristics.hpp"
#include "hyper1d/grid_function.hpp"
#include "hyper1d/boundary.hpp"
#include "hyper1d/operators.hpp"
#include "hyper1d/solver.hpp"
#include "hyper1d/smoothing.hpp"
#include "hyper1d/fourier.hpp"
#include "hyper1d/fredholm.hpp"
#include "hyper1d/scenario.hpp"
#include "hyper1d/report.hpp"
