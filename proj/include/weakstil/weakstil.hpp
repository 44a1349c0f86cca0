#pragma once

#include "weakstil/baseline.hpp"
#include "weakstil/core.hpp"
#include "weakstil/crossval.hpp"
#include "weakstil/grid.hpp"
#include "weakstil/heatmap.hpp"
#include "weakstil/io.hpp"
#include "weakstil/metrics.hpp"
#include "weakstil/model.hpp"
#include "weakstil/optim.hpp"
#include "weakstil/parallel.hpp"
#include "weakstil/random.hpp"
#include "weakstil/splits.hpp"
#include "weakstil/synth.hpp"
#include "weakstil/train.hpp"
