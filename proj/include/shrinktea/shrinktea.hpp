#pragma once

// Everything: tensors and autodiff, staged networks, losses, data and protocols,
// training engine, checkpoints, and the gradient-check suites.

#include "shrinktea/checkpoint.hpp"
#include "shrinktea/config.hpp"
#include "shrinktea/data.hpp"
#include "shrinktea/engine.hpp"
#include "shrinktea/errors.hpp"
#include "shrinktea/gradcheck.hpp"
#include "shrinktea/gradsuite.hpp"
#include "shrinktea/losses.hpp"
#include "shrinktea/nets.hpp"
#include "shrinktea/ops.hpp"
#include "shrinktea/optim.hpp"
#include "shrinktea/rng.hpp"
#include "shrinktea/tensor.hpp"
