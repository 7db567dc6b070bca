// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vbda/common.hpp"
#include "vbda/rng.hpp"
#include "vbda/parallel.hpp"
#include "vbda/margins.hpp"
#include "vbda/paircopula.hpp"
#include "vbda/dvine.hpp"
#include "vbda/data.hpp"
#include "vbda/variational.hpp"
#include "vbda/mcmc.hpp"
#include "vbda/analysis.hpp"
