#pragma once

#include "confidence.hpp"
#include "error.hpp"
#include "gauss.hpp"
#include "io.hpp"
#include "moments.hpp"
#include "normal.hpp"
#include "pairwise.hpp"
#include "randomization.hpp"
#include "ranks.hpp"
#include "report.hpp"
#include "statistics.hpp"
