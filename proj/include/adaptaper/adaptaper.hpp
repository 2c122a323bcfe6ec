#pragma once

#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"
#include "adaptaper/tapers.hpp"
#include "adaptaper/sparse.hpp"
#include "adaptaper/covariance.hpp"
#include "adaptaper/range_select.hpp"
#include "adaptaper/interp.hpp"
#include "adaptaper/kriging.hpp"
#include "adaptaper/likelihood.hpp"
#include "adaptaper/sim.hpp"
