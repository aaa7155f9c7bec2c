#pragma once

#include "fpa/bootstrap.hpp"
#include "fpa/boundary_density.hpp"
#include "fpa/csv.hpp"
#include "fpa/error.hpp"
#include "fpa/fit.hpp"
#include "fpa/hetero.hpp"
#include "fpa/kernels.hpp"
#include "fpa/panel.hpp"
#include "fpa/parallel.hpp"
#include "fpa/quadrature.hpp"
#include "fpa/rearrange.hpp"
#include "fpa/rng.hpp"
#include "fpa/sample.hpp"
#include "fpa/simulate.hpp"
#include "fpa/strategy.hpp"
#include "fpa/theta_family.hpp"
#include "fpa/variance.hpp"
