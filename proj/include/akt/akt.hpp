#pragma once

#include "akt/alignment.hpp"
#include "akt/baselines.hpp"
#include "akt/checkpoint.hpp"
#include "akt/config.hpp"
#include "akt/data.hpp"
#include "akt/error.hpp"
#include "akt/experiment.hpp"
#include "akt/gradcheck_suite.hpp"
#include "akt/kernel/activation.hpp"
#include "akt/kernel/affine.hpp"
#include "akt/kernel/grad_check.hpp"
#include "akt/kernel/loss.hpp"
#include "akt/kernel/sgd.hpp"
#include "akt/metrics.hpp"
#include "akt/networks.hpp"
#include "akt/rng.hpp"
#include "akt/tensor.hpp"
#include "akt/trainer.hpp"
