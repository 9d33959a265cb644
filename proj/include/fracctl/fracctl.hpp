#pragma once

// Umbrella header.

#include <fracctl/errors.hpp>
#include <fracctl/frac_kernel.hpp>
#include <fracctl/activation.hpp>
#include <fracctl/control_space.hpp>
#include <fracctl/state_solver.hpp>
#include <fracctl/sensitivity.hpp>
#include <fracctl/adjoint.hpp>
#include <fracctl/optimizer.hpp>
#include <fracctl/stationarity.hpp>
#include <fracctl/csv.hpp>
