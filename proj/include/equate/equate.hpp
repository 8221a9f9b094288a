#pragma once

#include "equate/circuit.hpp"
#include "equate/circuit_io.hpp"
#include "equate/error.hpp"
#include "equate/gradients.hpp"
#include "equate/monitor.hpp"
#include "equate/random.hpp"
#include "equate/server.hpp"
#include "equate/statevector.hpp"
#include "equate/sweep.hpp"
#include "equate/telemetry.hpp"
#include "equate/trainer.hpp"
