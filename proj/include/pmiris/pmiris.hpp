#pragma once

#include "pmiris/convolve.hpp"
#include "pmiris/error.hpp"
#include "pmiris/evaluation.hpp"
#include "pmiris/filter_bank.hpp"
#include "pmiris/grid.hpp"
#include "pmiris/image_io.hpp"
#include "pmiris/iris_code.hpp"
#include "pmiris/manifest.hpp"
#include "pmiris/match.hpp"
#include "pmiris/parallel.hpp"
#include "pmiris/polar.hpp"
#include "pmiris/rng.hpp"
#include "pmiris/segmentation.hpp"
#include "pmiris/selection.hpp"
#include "pmiris/siamese.hpp"
#include "pmiris/synth.hpp"
#include "pmiris/version.hpp"
