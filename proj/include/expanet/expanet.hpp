#pragma once

// Convenience umbrella: pulls in the whole pipeline from text ingestion to
// training, evaluation, and the bag-of-words baselines.

#include "expanet/baselines.hpp"
#include "expanet/corpus.hpp"
#include "expanet/io.hpp"
#include "expanet/model.hpp"
#include "expanet/numerics.hpp"
#include "expanet/retrieval.hpp"
#include "expanet/trainer.hpp"
