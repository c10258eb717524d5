// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "bee/autodiff.hpp"
#include "bee/car.hpp"
#include "bee/checkpoint.hpp"
#include "bee/codebook.hpp"
#include "bee/config.hpp"
#include "bee/loop.hpp"
#include "bee/mcr.hpp"
#include "bee/metrics.hpp"
#include "bee/net.hpp"
#include "bee/optim.hpp"
#include "bee/paramset.hpp"
#include "bee/rng.hpp"
#include "bee/sinkhorn.hpp"
#include "bee/stream.hpp"
#include "bee/svg.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"
