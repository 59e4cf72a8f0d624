#pragma once

#include "tgd/tensor.hpp"
#include "tgd/layers.hpp"
#include "tgd/network.hpp"
#include "tgd/weights_io.hpp"
#include "tgd/kse.hpp"
#include "tgd/masking.hpp"
#include "tgd/phantom.hpp"
#include "tgd/volume.hpp"
#include "tgd/metrics.hpp"
#include "tgd/train.hpp"
#include "tgd/json_io.hpp"
#include "tgd/dataset_io.hpp"
