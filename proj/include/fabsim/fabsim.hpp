#pragma once

// Everything except file I/O (fabsim/io/*, which needs yaml-cpp).

#include "fabsim/compliance.hpp"
#include "fabsim/errors.hpp"
#include "fabsim/factory.hpp"
#include "fabsim/nr_frame.hpp"
#include "fabsim/production_line.hpp"
#include "fabsim/radio_link.hpp"
#include "fabsim/safety.hpp"
#include "fabsim/sim_core.hpp"
#include "fabsim/simulation.hpp"
#include "fabsim/traffic.hpp"
