#pragma once

#include "ksm/bound_verifier.hpp"
#include "ksm/broadcast_sim.hpp"
#include "ksm/error.hpp"
#include "ksm/exact_oracles.hpp"
#include "ksm/model_io.hpp"
#include "ksm/phylo_cov.hpp"
#include "ksm/quadrature.hpp"
#include "ksm/rng.hpp"
#include "ksm/running_moments.hpp"
#include "ksm/spectral.hpp"
