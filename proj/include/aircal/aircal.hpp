#pragma once

#include "aircal/types.hpp"
#include "aircal/tensor.hpp"
#include "aircal/rng.hpp"
#include "aircal/parallel.hpp"
#include "aircal/model.hpp"
#include "aircal/calibration.hpp"
#include "aircal/dictionary.hpp"
#include "aircal/imaging.hpp"
#include "aircal/benchmark.hpp"
#include "aircal/io.hpp"
