#pragma once

#include "dconrec/augment.hpp"
#include "dconrec/baselines.hpp"
#include "dconrec/condense.hpp"
#include "dconrec/errors.hpp"
#include "dconrec/eval.hpp"
#include "dconrec/interactions.hpp"
#include "dconrec/matrix.hpp"
#include "dconrec/model.hpp"
#include "dconrec/projection.hpp"
#include "dconrec/random.hpp"
#include "dconrec/training.hpp"
