#include "plast/stats.h"

#include "plast/error.h"
#include "plast/parallel.h"

#include <algorithm>
#include <set>

namespace plast {

PositionAggregation aggregation_from_name(const std::string & name) {
    if (name == "any" || name == "or") return PositionAggregation::any;
    if (name == "last" || name == "last_token") return PositionAggregation::last_token;
    if (name == "mean") return PositionAggregation::mean;
    throw ConfigError("unknown position aggregation '" + name + "'");
}

std::string aggregation_name(PositionAggregation a) {
    switch (a) {
        case PositionAggregation::any: return "any";
        case PositionAggregation::last_token: return "last_token";
        case PositionAggregation::mean: return "mean";
    }
    return "any";
}

NeuronMask activation_mask(const Tensor & gate_preact, const MaskOptions & options) {
    if (gate_preact.rank() != 2 || gate_preact.numel() == 0) {
        throw InvalidArgument("activation_mask: empty pre-activation matrix");
    }
    if (!gate_preact.all_finite()) throw NumericError("activation_mask: non-finite pre-activation");
    const size_t positions = gate_preact.rows();
    const size_t width = gate_preact.cols();
    if (options.skip_leading_positions >= positions) {
        throw InvalidArgument("activation_mask: no positions left after skipping leading positions");
    }
    const size_t first = options.skip_leading_positions;

    NeuronMask mask(width);
    switch (options.aggregation) {
        case PositionAggregation::any:
            for (size_t p = first; p < positions; ++p) {
                auto row = gate_preact.row(p);
                for (size_t j = 0; j < width; ++j) {
                    if (ad::activation_value(options.activation, row[j]) > 0.0) mask.set(j);
                }
            }
            break;
        case PositionAggregation::last_token: {
            auto row = gate_preact.row(positions - 1);
            for (size_t j = 0; j < width; ++j) {
                if (ad::activation_value(options.activation, row[j]) > 0.0) mask.set(j);
            }
            break;
        }
        case PositionAggregation::mean:
            for (size_t j = 0; j < width; ++j) {
                double s = 0.0;
                for (size_t p = first; p < positions; ++p) s += ad::activation_value(options.activation, gate_preact(p, j));
                if (s / double(positions - first) > 0.0) mask.set(j);
            }
            break;
    }
    return mask;
}

double activation_ratio(const NeuronMask & mask, size_t d_inter) {
    if (d_inter == 0 || mask.width() > d_inter) throw InvalidArgument("activation_ratio: mask wider than d_inter");
    return double(mask.count()) / double(d_inter);
}

double overlap_ratio(const NeuronMask & n_l, const NeuronMask & n_eng) {
    const size_t denom = n_eng.count();
    if (denom == 0) throw UndefinedOverlap("overlap ratio undefined: English activated-neuron set is empty");
    return double(n_l.intersect_count(n_eng)) / double(denom);
}

StatsResult aggregate(std::span<const TraceFile> traces, const std::string & english) {
    if (traces.empty()) throw InvalidArgument("aggregate: no traces");
    std::vector<const TraceFile *> sorted;
    for (const auto & t : traces) {
        auto problems = validate(t);
        if (!problems.empty()) throw FormatError("trace '" + t.language + "' invalid: " + problems.front());
        sorted.push_back(&t);
    }
    std::sort(sorted.begin(), sorted.end(), [](auto * a, auto * b) { return a->language < b->language; });
    for (size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i]->language == sorted[i - 1]->language) {
            throw InvalidArgument("aggregate: duplicate trace for language '" + sorted[i]->language + "'");
        }
    }
    const size_t n_layers = sorted.front()->n_layers;
    const size_t d_inter = sorted.front()->d_inter;
    for (auto * t : sorted) {
        if (t->n_layers != n_layers || t->d_inter != d_inter) {
            throw ShapeError("aggregate: dimension mismatch for language '" + t->language + "'");
        }
    }

    StatsResult out;
    out.n_layers = n_layers;
    out.d_inter = d_inter;
    out.english = english;
    out.languages.resize(sorted.size());

    parallel_for(sorted.size(), [&](size_t li) {
        const TraceFile & t = *sorted[li];
        LangLayerStats & s = out.languages[li];
        s.language = t.language;
        s.n_samples = t.n_samples;
        s.ratio.resize(n_layers);
        s.neurons.assign(n_layers, NeuronMask(d_inter));
        for (size_t layer = 1; layer <= n_layers; ++layer) {
            size_t active = 0;
            for (size_t smp = 0; smp < t.n_samples; ++smp) {
                NeuronMask m = t.mask(smp, layer);
                active += m.count();
                s.neurons[layer - 1] |= m;
            }
            s.ratio[layer - 1] = double(active) / (double(t.n_samples) * double(d_inter));
        }
    });

    auto eng = std::find_if(out.languages.begin(), out.languages.end(),
                            [&](const LangLayerStats & s) { return s.language == english; });
    if (eng == out.languages.end()) throw InvalidArgument("aggregate: missing English trace '" + english + "'");

    OverlapSeries & ov = out.overlap;
    for (const auto & s : out.languages) {
        if (s.language == english) continue;
        ov.languages.push_back(s.language);
        std::vector<double> series(n_layers);
        for (size_t i = 0; i < n_layers; ++i) {
            try {
                series[i] = overlap_ratio(s.neurons[i], eng->neurons[i]);
            } catch (const UndefinedOverlap &) {
                throw UndefinedOverlap("overlap undefined at layer " + std::to_string(i + 1) +
                                       ": English activated-neuron set is empty");
            }
        }
        ov.per_language.push_back(std::move(series));
    }
    if (!ov.per_language.empty()) {
        ov.avg.assign(n_layers, 0.0);
        for (size_t i = 0; i < n_layers; ++i) {
            double s = 0.0;
            for (const auto & series : ov.per_language) s += series[i];
            ov.avg[i] = s / double(ov.per_language.size());
        }
    }
    return out;
}

nlohmann::json stats_to_json(const StatsResult & s) {
    using nlohmann::json;
    json langs = json::array();
    for (const auto & l : s.languages) {
        auto ov_it = std::find(s.overlap.languages.begin(), s.overlap.languages.end(), l.language);
        json layers = json::array();
        for (size_t i = 0; i < s.n_layers; ++i) {
            json entry = {{"layer", i + 1}, {"R", l.ratio[i]}, {"N", l.neurons[i].count()}};
            if (ov_it != s.overlap.languages.end()) {
                entry["O"] = s.overlap.per_language[size_t(ov_it - s.overlap.languages.begin())][i];
            } else {
                entry["O"] = nullptr;
            }
            layers.push_back(std::move(entry));
        }
        langs.push_back({{"language", l.language}, {"n_samples", l.n_samples}, {"layers", std::move(layers)}});
    }
    return {
        {"format", "plast-stats"},
        {"version", 1},
        {"n_layers", s.n_layers},
        {"d_inter", s.d_inter},
        {"english", s.english},
        {"languages", std::move(langs)},
        {"avg_overlap", s.overlap.avg},
    };
}

} // namespace plast
