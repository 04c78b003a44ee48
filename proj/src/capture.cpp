#include "plast/capture.h"

#include "plast/error.h"
#include "plast/parallel.h"

#include <map>

namespace plast {

std::vector<size_t> monitor_tokens(const TranslationPair & pair) {
    if (pair.source_tokens.empty()) throw InvalidArgument("monitor pair has no question tokens");
    return pair.source_tokens;
}

std::vector<TraceFile> capture_traces(const Model & model, const std::vector<TranslationPair> & pairs,
                                      const MaskOptions & options) {
    if (pairs.empty()) throw InvalidArgument("capture_traces: no pairs");
    const ModelConfig & cfg = model.config();
    MaskOptions opts = options;
    opts.activation = cfg.activation;

    std::vector<std::vector<NeuronMask>> masks(pairs.size());
    parallel_for(pairs.size(), [&](size_t i) {
        const std::vector<size_t> ids = monitor_tokens(pairs[i]);
        std::optional<size_t> image;
        if (cfg.n_vision_tokens > 0) image = pairs[i].image_id;
        ForwardResult fr = model.forward(ids, image, true);
        std::vector<NeuronMask> per_layer;
        per_layer.reserve(cfg.n_layers);
        for (const LayerCapture & lc : fr.capture->layers) per_layer.push_back(activation_mask(lc.gate_preact, opts));
        masks[i] = std::move(per_layer);
    });

    std::map<std::string, TraceFile> by_lang;
    for (size_t i = 0; i < pairs.size(); ++i) {
        auto [it, fresh] = by_lang.try_emplace(pairs[i].source_lang);
        TraceFile & t = it->second;
        if (fresh) {
            t.n_layers = uint32_t(cfg.n_layers);
            t.d_inter = uint32_t(cfg.d_inter);
            t.language = pairs[i].source_lang;
        }
        t.append_sample(masks[i]);
    }
    std::vector<TraceFile> out;
    for (auto & [lang, t] : by_lang) out.push_back(std::move(t));
    return out;
}

} // namespace plast
