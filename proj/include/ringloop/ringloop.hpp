#pragma once

// Umbrella header: the whole library in one include.

#include "ringloop/cavity.hpp"
#include "ringloop/core.hpp"
#include "ringloop/emulator.hpp"
#include "ringloop/errors.hpp"
#include "ringloop/estimation.hpp"
#include "ringloop/io.hpp"
#include "ringloop/loop.hpp"
#include "ringloop/synthesis.hpp"
