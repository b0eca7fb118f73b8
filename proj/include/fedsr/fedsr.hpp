#pragma once

#include "fedsr/config.hpp"
#include "fedsr/dataset.hpp"
#include "fedsr/degradation.hpp"
#include "fedsr/error.hpp"
#include "fedsr/evaluation.hpp"
#include "fedsr/federation.hpp"
#include "fedsr/image_io.hpp"
#include "fedsr/model.hpp"
#include "fedsr/ops.hpp"
#include "fedsr/optim.hpp"
#include "fedsr/partition.hpp"
#include "fedsr/rng.hpp"
#include "fedsr/synthetic.hpp"
#include "fedsr/tensor.hpp"
#include "fedsr/weights.hpp"
