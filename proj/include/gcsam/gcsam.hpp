#pragma once

// Umbrella header for the GCSAM toolkit.

#include "gcsam/analysis.hpp"
#include "gcsam/centralization.hpp"
#include "gcsam/checkpoint.hpp"
#include "gcsam/data.hpp"
#include "gcsam/errors.hpp"
#include "gcsam/finite_diff.hpp"
#include "gcsam/harness.hpp"
#include "gcsam/models.hpp"
#include "gcsam/optim.hpp"
#include "gcsam/param_set.hpp"
#include "gcsam/rng.hpp"
#include "gcsam/tape.hpp"
#include "gcsam/tensor.hpp"
#include "gcsam/toys.hpp"
#include "gcsam/verify.hpp"
