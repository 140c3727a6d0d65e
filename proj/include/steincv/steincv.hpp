#pragma once

#include "steincv/basis.hpp"
#include "steincv/common.hpp"
#include "steincv/ensemble.hpp"
#include "steincv/eval.hpp"
#include "steincv/parallel.hpp"
#include "steincv/regression.hpp"
#include "steincv/rng.hpp"
#include "steincv/stein.hpp"
#include "steincv/targets.hpp"
#include "steincv/zvcv.hpp"
