#pragma once

#include "mixfc/errors.hpp"
#include "mixfc/family.hpp"
#include "mixfc/component.hpp"
#include "mixfc/random.hpp"
#include "mixfc/mixture.hpp"
#include "mixfc/quadrature.hpp"
#include "mixfc/representations.hpp"
#include "mixfc/scoring.hpp"
#include "mixfc/ensemble.hpp"
#include "mixfc/fitting.hpp"
#include "mixfc/parallel.hpp"
#include "mixfc/formats.hpp"
