#pragma once

// Umbrella header: simulation and analysis of photon-counting tomography
// of a heralded single photon, reconstructing its Wigner function from
// displaced photon-number statistics.

#include "pnrtomo/config.hpp"
#include "pnrtomo/dataset.hpp"
#include "pnrtomo/detector.hpp"
#include "pnrtomo/errors.hpp"
#include "pnrtomo/fock.hpp"
#include "pnrtomo/optics.hpp"
#include "pnrtomo/pipeline.hpp"
#include "pnrtomo/random.hpp"
#include "pnrtomo/source.hpp"
#include "pnrtomo/tomography.hpp"
