#pragma once

#include "mhdtc/checkpoint.hpp"
#include "mhdtc/error.hpp"
#include "mhdtc/evolve.hpp"
#include "mhdtc/field.hpp"
#include "mhdtc/grid.hpp"
#include "mhdtc/lab/config.hpp"
#include "mhdtc/lab/emit.hpp"
#include "mhdtc/lab/experiments.hpp"
#include "mhdtc/layout.hpp"
#include "mhdtc/oper.hpp"
#include "mhdtc/parallel.hpp"
#include "mhdtc/random_field.hpp"
#include "mhdtc/spectra.hpp"
#include "mhdtc/steady.hpp"
