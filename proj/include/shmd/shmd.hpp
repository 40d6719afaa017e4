#pragma once

#include "shmd/checkpoint.hpp"
#include "shmd/config.hpp"
#include "shmd/dataprep.hpp"
#include "shmd/errors.hpp"
#include "shmd/eval.hpp"
#include "shmd/gradcheck.hpp"
#include "shmd/layers.hpp"
#include "shmd/signal.hpp"
#include "shmd/tensor.hpp"
#include "shmd/train.hpp"
