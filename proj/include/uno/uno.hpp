#pragma once

#include <uno/core.hpp>
#include <uno/nnet.hpp>
#include <uno/uncertainty.hpp>
#include <uno/experts.hpp>
#include <uno/tempnet.hpp>
#include <uno/calibration.hpp>
#include <uno/fusion.hpp>
#include <uno/scenegen.hpp>
#include <uno/bench.hpp>
