// Umbrella header.
#ifndef TWOSCALE_TWOSCALE_HPP
#define TWOSCALE_TWOSCALE_HPP

#include "twoscale/blocks.hpp"
#include "twoscale/config.hpp"
#include "twoscale/experiment.hpp"
#include "twoscale/graph.hpp"
#include "twoscale/interconnect.hpp"
#include "twoscale/io.hpp"
#include "twoscale/oracle.hpp"
#include "twoscale/problems.hpp"
#include "twoscale/rng.hpp"
#include "twoscale/trace.hpp"
#include "twoscale/trackers.hpp"
#include "twoscale/types.hpp"

#endif  // TWOSCALE_TWOSCALE_HPP
