#pragma once

// Umbrella header for the event-side pipeline: event ingestion, dynamic
// subframe splitting, polarity-frame accumulation and rendering, event-based
// sparse attention, the spatio-temporal motion entanglement block, and
// multi-scale pooling, on a self-contained numeric substrate.

#include "evkit/accumulator.hpp"
#include "evkit/codec.hpp"
#include "evkit/des.hpp"
#include "evkit/errors.hpp"
#include "evkit/esa.hpp"
#include "evkit/event.hpp"
#include "evkit/grad_check.hpp"
#include "evkit/json_io.hpp"
#include "evkit/numerics.hpp"
#include "evkit/parallel.hpp"
#include "evkit/pipeline.hpp"
#include "evkit/rng.hpp"
#include "evkit/stme.hpp"
#include "evkit/tensor.hpp"
