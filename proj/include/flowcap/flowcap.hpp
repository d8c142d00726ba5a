#pragma once

#include "flowcap/capacity.hpp"
#include "flowcap/construct1d.hpp"
#include "flowcap/densities/gaussian.hpp"
#include "flowcap/densities/mixture.hpp"
#include "flowcap/densities/piecewise.hpp"
#include "flowcap/densities/product.hpp"
#include "flowcap/densities/radial.hpp"
#include "flowcap/densities/relaxation.hpp"
#include "flowcap/densities/targets.hpp"
#include "flowcap/density.hpp"
#include "flowcap/errors.hpp"
#include "flowcap/experiments.hpp"
#include "flowcap/flow_layer.hpp"
#include "flowcap/flow_stack.hpp"
#include "flowcap/lincompile.hpp"
#include "flowcap/metrics.hpp"
#include "flowcap/nonlinearity.hpp"
#include "flowcap/quadrature.hpp"
#include "flowcap/rng.hpp"
#include "flowcap/serialize.hpp"
#include "flowcap/special.hpp"
#include "flowcap/topology.hpp"
#include "flowcap/transport1d.hpp"
#include "flowcap/validate.hpp"
#include "flowcap/version.hpp"
