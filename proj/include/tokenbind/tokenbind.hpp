#pragma once

// Umbrella header: the complete semantic-binding toolkit.

#include "tokenbind/atm.hpp"
#include "tokenbind/attention.hpp"
#include "tokenbind/capo.hpp"
#include "tokenbind/eig.hpp"
#include "tokenbind/embx.hpp"
#include "tokenbind/error.hpp"
#include "tokenbind/geometry.hpp"
#include "tokenbind/matrix.hpp"
#include "tokenbind/optim.hpp"
#include "tokenbind/pipeline.hpp"
#include "tokenbind/prompt.hpp"
#include "tokenbind/report.hpp"
#include "tokenbind/rng.hpp"
#include "tokenbind/synth.hpp"
#include "tokenbind/verify.hpp"
