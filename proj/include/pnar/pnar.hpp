#pragma once

#include "pnar/error.hpp"
#include "pnar/netgraph.hpp"
#include "pnar/models.hpp"
#include "pnar/optim.hpp"
#include "pnar/stats.hpp"
#include "pnar/inference.hpp"
#include "pnar/lintest.hpp"
#include "pnar/copsim.hpp"
#include "pnar/io.hpp"
