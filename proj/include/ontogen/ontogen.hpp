#pragma once

#include "ontogen/builder.hpp"
#include "ontogen/corpus.hpp"
#include "ontogen/dataset.hpp"
#include "ontogen/digest.hpp"
#include "ontogen/errors.hpp"
#include "ontogen/features.hpp"
#include "ontogen/forest.hpp"
#include "ontogen/metrics.hpp"
#include "ontogen/ontology.hpp"
#include "ontogen/pipeline.hpp"
#include "ontogen/providers.hpp"
#include "ontogen/relation.hpp"
#include "ontogen/review.hpp"
#include "ontogen/review_http.hpp"
#include "ontogen/rng.hpp"
#include "ontogen/text.hpp"
#include "ontogen/topic_index.hpp"
