#pragma once

#include "casft/autodiff.hpp"
#include "casft/cascade.hpp"
#include "casft/checkpoint.hpp"
#include "casft/common.hpp"
#include "casft/config.hpp"
#include "casft/diffusion.hpp"
#include "casft/embed_cache.hpp"
#include "casft/graphwave.hpp"
#include "casft/harness.hpp"
#include "casft/hawkes.hpp"
#include "casft/metrics.hpp"
#include "casft/model.hpp"
#include "casft/netsmf.hpp"
#include "casft/nn.hpp"
#include "casft/ode.hpp"
#include "casft/plot.hpp"
#include "casft/rng.hpp"
#include "casft/temporal.hpp"
