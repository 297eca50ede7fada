#pragma once

#include "placerec/corpus.hpp"
#include "placerec/counting_grid.hpp"
#include "placerec/dirichlet_mixture.hpp"
#include "placerec/error.hpp"
#include "placerec/eval.hpp"
#include "placerec/features.hpp"
#include "placerec/histogram.hpp"
#include "placerec/hmm.hpp"
#include "placerec/image.hpp"
#include "placerec/lda.hpp"
#include "placerec/matrix.hpp"
#include "placerec/model_bank.hpp"
#include "placerec/numeric.hpp"
