// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "idlma/core.hpp"
#include "idlma/experiment.hpp"
#include "idlma/grid_io.hpp"
#include "idlma/metrics.hpp"
#include "idlma/network.hpp"
#include "idlma/separator.hpp"
#include "idlma/source_model.hpp"
#include "idlma/stft.hpp"
#include "idlma/synth.hpp"
#include "idlma/trainer.hpp"
#include "idlma/wav.hpp"
