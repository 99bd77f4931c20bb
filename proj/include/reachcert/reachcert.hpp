#pragma once

#include "reachcert/certify.hpp"
#include "reachcert/config.hpp"
#include "reachcert/env.hpp"
#include "reachcert/exact_recursion.hpp"
#include "reachcert/grid.hpp"
#include "reachcert/inference.hpp"
#include "reachcert/interval.hpp"
#include "reachcert/layouts.hpp"
#include "reachcert/learning.hpp"
#include "reachcert/neural_synthesis.hpp"
#include "reachcert/nn.hpp"
#include "reachcert/parallel.hpp"
#include "reachcert/policy.hpp"
#include "reachcert/posterior.hpp"
#include "reachcert/random.hpp"
#include "reachcert/report.hpp"
#include "reachcert/serialization.hpp"
#include "reachcert/synthesize.hpp"
