#pragma once

#include "wic/autograd.hpp"
#include "wic/checkpoint.hpp"
#include "wic/classifiers.hpp"
#include "wic/corpus.hpp"
#include "wic/encoder.hpp"
#include "wic/error.hpp"
#include "wic/features.hpp"
#include "wic/gradcheck.hpp"
#include "wic/harness/config.hpp"
#include "wic/harness/evaluation.hpp"
#include "wic/harness/experiment.hpp"
#include "wic/optim.hpp"
#include "wic/spanhead.hpp"
#include "wic/store.hpp"
#include "wic/subword.hpp"
#include "wic/synthetic.hpp"
#include "wic/tensor.hpp"
#include "wic/textio.hpp"
#include "wic/types.hpp"
#include "wic/utf8.hpp"
