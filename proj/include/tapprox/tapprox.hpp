#pragma once

#include "tapprox/expr.hpp"
#include "tapprox/geometry.hpp"
#include "tapprox/horn.hpp"
#include "tapprox/jets.hpp"
#include "tapprox/metrics.hpp"
#include "tapprox/sampler.hpp"
#include "tapprox/verify.hpp"
