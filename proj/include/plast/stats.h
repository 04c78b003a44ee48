#pragma once

#include "plast/autodiff.h"
#include "plast/tensor.h"
#include "plast/trace.h"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace plast {

// How token positions of one sample combine into "neuron activated".
enum class PositionAggregation {
    any,        // activated at any position (default)
    last_token, // activated at the final position
    mean,       // mean of f(pre-activation) over positions exceeds zero
};

PositionAggregation aggregation_from_name(const std::string & name);
std::string aggregation_name(PositionAggregation a);

struct MaskOptions {
    PositionAggregation aggregation = PositionAggregation::any;
    ad::Activation activation = ad::Activation::silu;
    size_t skip_leading_positions = 0; // e.g. vision tokens when excluded
};

// Bit j is set iff f(gate_preact[., j]) > 0 under the chosen aggregation.
// Zero counts as inactive.
NeuronMask activation_mask(const Tensor & gate_preact, const MaskOptions & options = {});

double activation_ratio(const NeuronMask & mask, size_t d_inter);

// |n_l & n_eng| / |n_eng|; throws UndefinedOverlap when n_eng is empty.
double overlap_ratio(const NeuronMask & n_l, const NeuronMask & n_eng);

struct LangLayerStats {
    std::string language;
    size_t n_samples = 0;
    std::vector<double> ratio;         // per layer, mean over samples
    std::vector<NeuronMask> neurons;   // per layer, union over samples
};

struct OverlapSeries {
    std::vector<std::string> languages;          // non-English, sorted
    std::vector<std::vector<double>> per_language;
    std::vector<double> avg;
};

struct StatsResult {
    size_t n_layers = 0;
    size_t d_inter = 0;
    std::string english;
    std::vector<LangLayerStats> languages; // sorted by tag
    OverlapSeries overlap;
};

// Languages are sorted by tag and sample sums are integer, so the result
// does not depend on trace or sample order.
StatsResult aggregate(std::span<const TraceFile> traces, const std::string & english = "en");

nlohmann::json stats_to_json(const StatsResult & s);

} // namespace plast
