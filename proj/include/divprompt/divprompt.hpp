// SPDX-License-Identifier: Apache-2.0
#pragma once

// Umbrella header. The live HTTP client is separate: include
// divprompt/live_backend.hpp where a provider connection is needed.

#include "divprompt/aggregation.hpp"
#include "divprompt/blocksworld.hpp"
#include "divprompt/bundle.hpp"
#include "divprompt/coloring.hpp"
#include "divprompt/cost.hpp"
#include "divprompt/error.hpp"
#include "divprompt/extraction.hpp"
#include "divprompt/gateway.hpp"
#include "divprompt/prompt_forge.hpp"
#include "divprompt/rational.hpp"
#include "divprompt/strategy.hpp"
#include "divprompt/task.hpp"
#include "divprompt/text.hpp"
#include "divprompt/runner.hpp"
