#pragma once

#include "circle_quadrature.hpp"
#include "conditioned_states.hpp"
#include "densities.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "generator_spectrum.hpp"
#include "inequalities.hpp"
#include "kac_process.hpp"
#include "limit_equation.hpp"
#include "normalization.hpp"
#include "numerics.hpp"
#include "report.hpp"
#include "sphere_geometry.hpp"
#include "statistics.hpp"
#include "svg_plot.hpp"
