// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cascade.hpp"
#include "critpoint.hpp"
#include "error.hpp"
#include "finiten.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "onebody.hpp"
#include "parallel.hpp"
#include "path.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "variational.hpp"
