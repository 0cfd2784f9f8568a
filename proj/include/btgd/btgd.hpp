#pragma once

#include "btgd/core.hpp"
#include "btgd/diagnostics.hpp"
#include "btgd/functions.hpp"
#include "btgd/linesearch.hpp"
#include "btgd/minibatch.hpp"
#include "btgd/optimizers.hpp"
