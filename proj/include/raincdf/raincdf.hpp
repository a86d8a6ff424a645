#pragma once

// Convenience include for the whole library.

#include "raincdf/baselines.hpp"
#include "raincdf/common.hpp"
#include "raincdf/dataset.hpp"
#include "raincdf/ensemble.hpp"
#include "raincdf/harness.hpp"
#include "raincdf/ingest.hpp"
#include "raincdf/kdtree.hpp"
#include "raincdf/least_squares.hpp"
#include "raincdf/logistic.hpp"
#include "raincdf/scoring.hpp"
#include "raincdf/synthetic.hpp"
