#pragma once

// Umbrella header for the DAAL deep-metric-learning workbench.

#include "numerics.hpp"
#include "losses.hpp"
#include "adaptive_line.hpp"
#include "network.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "gradcheck.hpp"
#include "checkpoint.hpp"
#include "experiment.hpp"
#include "commands.hpp"
