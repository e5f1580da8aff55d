#pragma once

#include "qsc/ast.hpp"
#include "qsc/common.hpp"
#include "qsc/crb.hpp"
#include "qsc/experiments.hpp"
#include "qsc/localization.hpp"
#include "qsc/quantization.hpp"
#include "qsc/rng.hpp"
#include "qsc/sensing.hpp"
#include "qsc/special_functions.hpp"
#include "qsc/spectral_model.hpp"
#include "qsc/version.hpp"
