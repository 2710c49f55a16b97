#pragma once

#include "config.hpp"
#include "error.hpp"
#include "estimator.hpp"
#include "least_squares.hpp"
#include "noise_ensemble.hpp"
#include "parallel.hpp"
#include "response_io.hpp"
#include "response_model.hpp"
#include "scenario.hpp"
#include "sequence_engine.hpp"
#include "sequence_script.hpp"
#include "signal_io.hpp"
#include "spin_model.hpp"
#include "units.hpp"
