#pragma once

#include "lahn/ablation.hpp"
#include "lahn/checkpoint.hpp"
#include "lahn/config.hpp"
#include "lahn/encoder.hpp"
#include "lahn/error.hpp"
#include "lahn/grad_check.hpp"
#include "lahn/io.hpp"
#include "lahn/metrics.hpp"
#include "lahn/momentum.hpp"
#include "lahn/objectives.hpp"
#include "lahn/ops.hpp"
#include "lahn/optim.hpp"
#include "lahn/rng.hpp"
#include "lahn/sampler.hpp"
#include "lahn/synthetic.hpp"
#include "lahn/tensor.hpp"
#include "lahn/text.hpp"
#include "lahn/trainer.hpp"
