#pragma once

#include "ddsc/baselines.hpp"
#include "ddsc/bounds.hpp"
#include "ddsc/distance_matrix.hpp"
#include "ddsc/distribution.hpp"
#include "ddsc/divergences.hpp"
#include "ddsc/error.hpp"
#include "ddsc/evaluation.hpp"
#include "ddsc/experiments.hpp"
#include "ddsc/graph.hpp"
#include "ddsc/io.hpp"
#include "ddsc/lot.hpp"
#include "ddsc/random.hpp"
#include "ddsc/spectral.hpp"
#include "ddsc/timing.hpp"
#include "ddsc/transport.hpp"
