#pragma once

#include "moreau/common.hpp"
#include "moreau/envelope.hpp"
#include "moreau/synthdata.hpp"
#include "moreau/fitters.hpp"
#include "moreau/bounds.hpp"
#include "moreau/oracles.hpp"
#include "moreau/harness.hpp"
