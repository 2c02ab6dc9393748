#pragma once

#include "dilhyfs/core/error.hpp"
#include "dilhyfs/core/linalg.hpp"
#include "dilhyfs/core/rng.hpp"
#include "dilhyfs/core/tensor.hpp"
#include "dilhyfs/spectral/fft.hpp"
#include "dilhyfs/spectral/global_filter.hpp"
#include "dilhyfs/nn/layers.hpp"
#include "dilhyfs/nn/ops.hpp"
#include "dilhyfs/nn/sgd.hpp"
#include "dilhyfs/losses.hpp"
#include "dilhyfs/model/blocks.hpp"
#include "dilhyfs/model/config.hpp"
#include "dilhyfs/model/dual_branch.hpp"
#include "dilhyfs/model/train.hpp"
#include "dilhyfs/io/checkpoint.hpp"
#include "dilhyfs/prototype.hpp"
#include "dilhyfs/data/augment.hpp"
#include "dilhyfs/data/dataset.hpp"
#include "dilhyfs/data/manifest.hpp"
#include "dilhyfs/data/pgm.hpp"
#include "dilhyfs/data/synthetic.hpp"
#include "dilhyfs/protocol/metrics.hpp"
#include "dilhyfs/protocol/stream.hpp"
#include "dilhyfs/protocol/runner.hpp"
#include "dilhyfs/protocol/report.hpp"
#include "dilhyfs/config.hpp"
#include "dilhyfs/check/gradcheck.hpp"
#include "dilhyfs/check/selfcheck.hpp"
