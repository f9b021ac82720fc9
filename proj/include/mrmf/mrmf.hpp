#pragma once

// Umbrella header: pulls in the full training framework.

#include "mrmf/binio.hpp"
#include "mrmf/checkpoint.hpp"
#include "mrmf/concurrent.hpp"
#include "mrmf/dataset.hpp"
#include "mrmf/dataset_io.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/fusion.hpp"
#include "mrmf/gradcheck.hpp"
#include "mrmf/layers.hpp"
#include "mrmf/loss.hpp"
#include "mrmf/metrics.hpp"
#include "mrmf/model.hpp"
#include "mrmf/optimizer.hpp"
#include "mrmf/parallel.hpp"
#include "mrmf/pipeline.hpp"
#include "mrmf/pooling.hpp"
#include "mrmf/report.hpp"
#include "mrmf/rng.hpp"
#include "mrmf/stop.hpp"
#include "mrmf/tensor.hpp"
#include "mrmf/train.hpp"
