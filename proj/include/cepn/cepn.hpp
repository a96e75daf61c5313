#pragma once

// Umbrella header: the whole library in dependency order.

#include "cepn/error.hpp"
#include "cepn/rng.hpp"
#include "cepn/tensor.hpp"
#include "cepn/data.hpp"
#include "cepn/serialize.hpp"
#include "cepn/config.hpp"
#include "cepn/csv.hpp"
#include "cepn/nn.hpp"
#include "cepn/conv3d.hpp"
#include "cepn/batchnorm.hpp"
#include "cepn/convlstm.hpp"
#include "cepn/losses.hpp"
#include "cepn/linalg.hpp"
#include "cepn/survstats.hpp"
#include "cepn/coxreg.hpp"
#include "cepn/lasso_cox.hpp"
#include "cepn/features.hpp"
#include "cepn/phantom.hpp"
#include "cepn/dataset_io.hpp"
#include "cepn/prognet.hpp"
#include "cepn/model_io.hpp"
#include "cepn/optimizer.hpp"
#include "cepn/folds.hpp"
#include "cepn/train.hpp"
#include "cepn/experiment.hpp"
