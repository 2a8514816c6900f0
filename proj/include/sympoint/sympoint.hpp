#pragma once

#include "sympoint/tensor.hpp"
#include "sympoint/rng.hpp"
#include "sympoint/io.hpp"
#include "sympoint/optim.hpp"
#include "sympoint/nn.hpp"
#include "sympoint/vgio.hpp"
#include "sympoint/points.hpp"
#include "sympoint/conngraph.hpp"
#include "sympoint/spatial.hpp"
#include "sympoint/backbone.hpp"
#include "sympoint/head.hpp"
#include "sympoint/losses.hpp"
#include "sympoint/metrics.hpp"
#include "sympoint/synth.hpp"
#include "sympoint/plot.hpp"
#include "sympoint/config.hpp"
#include "sympoint/trainer.hpp"
