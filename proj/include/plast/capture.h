#pragma once

#include "plast/corpus.h"
#include "plast/model.h"
#include "plast/stats.h"
#include "plast/trace.h"

#include <vector>

namespace plast {

// Token sequence fed to the model when monitoring a question: the image's
// vision tokens (added by the model) followed by the question text.
std::vector<size_t> monitor_tokens(const TranslationPair & pair);

// Runs one captured forward per pair and returns one trace per source
// language, sorted by language tag. Samples keep the input order.
std::vector<TraceFile> capture_traces(const Model & model, const std::vector<TranslationPair> & pairs,
                                      const MaskOptions & options = {});

} // namespace plast
