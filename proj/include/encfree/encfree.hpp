#pragma once

#include "encfree/numkit/errors.hpp"
#include "encfree/numkit/linalg.hpp"
#include "encfree/numkit/rng.hpp"
#include "encfree/numkit/tensor.hpp"

#include "encfree/autonet/checkpoint.hpp"
#include "encfree/autonet/layers.hpp"
#include "encfree/autonet/loss.hpp"
#include "encfree/autonet/network.hpp"

#include "encfree/optimize/optimizers.hpp"

#include "encfree/latents/inference.hpp"
#include "encfree/latents/latent_table.hpp"

#include "encfree/trainers/metrics.hpp"
#include "encfree/trainers/trainers.hpp"

#include "encfree/analysis/correlation.hpp"
#include "encfree/analysis/load.hpp"
#include "encfree/analysis/pca.hpp"

#include "encfree/data/binary.hpp"
#include "encfree/data/dataset.hpp"
#include "encfree/data/idx.hpp"
#include "encfree/data/simulate.hpp"
