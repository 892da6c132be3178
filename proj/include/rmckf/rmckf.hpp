#pragma once

#include "rmckf/bandwidth.hpp"
#include "rmckf/bench.hpp"
#include "rmckf/diagnostics.hpp"
#include "rmckf/errors.hpp"
#include "rmckf/filter.hpp"
#include "rmckf/noise.hpp"
#include "rmckf/system.hpp"
