#pragma once

#include "detpol/builtin.hpp"
#include "detpol/derandomize.hpp"
#include "detpol/error.hpp"
#include "detpol/hull.hpp"
#include "detpol/lyapunov.hpp"
#include "detpol/measure.hpp"
#include "detpol/model.hpp"
#include "detpol/model_io.hpp"
#include "detpol/occupancy.hpp"
#include "detpol/scalar_dp.hpp"
