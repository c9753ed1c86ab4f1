#pragma once

#include "ppimt/error.hpp"
#include "ppimt/core_data.hpp"
#include "ppimt/sampling.hpp"
#include "ppimt/recalibration.hpp"
#include "ppimt/variance_theory.hpp"
#include "ppimt/estimators.hpp"
#include "ppimt/inference.hpp"
#include "ppimt/experiments.hpp"
#include "ppimt/verify.hpp"
#include "ppimt/cli.hpp"
