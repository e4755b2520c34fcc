#pragma once

#include "fnc/batch.hpp"
#include "fnc/config.hpp"
#include "fnc/core_math.hpp"
#include "fnc/data.hpp"
#include "fnc/error.hpp"
#include "fnc/eval.hpp"
#include "fnc/experiment.hpp"
#include "fnc/fn_detect.hpp"
#include "fnc/gradient_check.hpp"
#include "fnc/losses.hpp"
#include "fnc/model.hpp"
#include "fnc/trainer.hpp"
#include "fnc/verify.hpp"
