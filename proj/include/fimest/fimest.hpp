#pragma once

#include "fimest/crlb.hpp"
#include "fimest/divergence.hpp"
#include "fimest/emst.hpp"
#include "fimest/error.hpp"
#include "fimest/experiments.hpp"
#include "fimest/fim.hpp"
#include "fimest/models.hpp"
#include "fimest/parallel.hpp"
#include "fimest/random.hpp"
