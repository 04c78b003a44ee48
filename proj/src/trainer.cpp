#include "plast/trainer.h"

#include "plast/error.h"
#include "plast/rng.h"

#include <cmath>
#include <numeric>

namespace plast {

Prompt build_prompt(const TranslationPair & pair, const Tokenizer & tok, const ModelConfig & model,
                    const PromptOptions & options) {
    if (pair.source_tokens.empty() || pair.english_tokens.empty()) {
        throw InvalidArgument("build_prompt: source and English token sequences must be non-empty");
    }
    Prompt p;
    if (model.n_vision_tokens > 0) p.image_id = pair.image_id;

    auto push = [&](size_t id) { p.tokens.push_back(id); };
    auto push_s = [&](const char * surface) { push(tok.id_of(surface)); };
    auto bracketed = [&](const std::string & lang) {
        push_s("[");
        push(tok.language_name_token(lang));
        push_s("]");
    };

    // Translate this from [src] to [English]:\n[src]: {source}\n[English]: {english}
    if (options.instruction) {
        push_s("Translate");
        push_s("this");
        push_s("from");
        bracketed(pair.source_lang);
        push_s("to");
        bracketed(kEnglish);
        push_s(":");
        push_s("<nl>");
        bracketed(pair.source_lang);
        push_s(":");
    }
    for (size_t id : pair.source_tokens) push(id);
    if (options.instruction) {
        push_s("<nl>");
        bracketed(kEnglish);
        push_s(":");
    }
    p.target_start = p.tokens.size();
    for (size_t id : pair.english_tokens) push(id);
    p.target_mask.assign(p.tokens.size(), 0);
    for (size_t i = p.target_start; i < p.tokens.size(); ++i) p.target_mask[i] = 1;

    const size_t total = p.tokens.size() + (p.image_id ? model.n_vision_tokens : 0);
    if (total > model.max_seq_len) {
        throw InvalidArgument("build_prompt: prompt of " + std::to_string(total) + " tokens exceeds max_seq_len " +
                              std::to_string(model.max_seq_len));
    }
    return p;
}

namespace {

// Sum of target-token losses for one prompt and the number of targets.
std::pair<ad::Var, size_t> prompt_loss(const Model & model, const Prompt & p) {
    const size_t nv = p.image_id ? model.config().n_vision_tokens : 0;
    ForwardResult fr = model.forward(p.tokens, p.image_id, false);
    const size_t rows = fr.logits.rows();
    std::vector<size_t> targets(rows, 0);
    std::vector<double> weights(rows, 0.0);
    size_t count = 0;
    for (size_t t = 1; t < p.tokens.size(); ++t) {
        if (!p.target_mask[t]) continue;
        targets[nv + t - 1] = p.tokens[t];
        weights[nv + t - 1] = 1.0;
        ++count;
    }
    return {ad::cross_entropy(fr.logits, targets, weights), count};
}

} // namespace

ad::Var translation_loss(const Model & model, std::span<const Prompt> batch) {
    if (batch.empty()) throw InvalidArgument("translation_loss: empty batch");
    ad::Var total;
    size_t count = 0;
    for (const Prompt & p : batch) {
        auto [loss, n] = prompt_loss(model, p);
        total = total ? ad::add(total, loss) : loss;
        count += n;
    }
    if (count == 0) throw InvalidArgument("translation_loss: batch has no target tokens");
    return ad::scale(total, 1.0 / double(count));
}

double mean_loss(const Model & model, std::span<const Prompt> prompts) {
    if (prompts.empty()) throw InvalidArgument("mean_loss: no prompts");
    double total = 0.0;
    size_t count = 0;
    for (const Prompt & p : prompts) {
        auto [loss, n] = prompt_loss(model, p);
        total += loss.item();
        count += n;
    }
    return total / double(count);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
    if (batch_size == 0) throw ConfigError("train config: batch_size must be > 0");
    if (optimizer != "adam") throw ConfigError("train config: unsupported optimizer '" + optimizer + "'");
}

void Adam::step(const std::vector<NamedParam> & params) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    for (const auto & p : params) {
        if (!p.var.trainable()) continue;
        ad::Var v = p.var;
        Slot & s = state_[v.node()];
        Tensor & w = v.mutable_value();
        const Tensor & g = v.grad();
        if (s.m.numel() != w.numel()) {
            s.m = Tensor(w.shape());
            s.v = Tensor(w.shape());
        }
        for (size_t i = 0; i < w.numel(); ++i) {
            s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * g[i];
            s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * g[i] * g[i];
            w[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
        }
    }
}

namespace {

std::map<std::string, uint64_t> frozen_checksums(const Model & model) {
    std::map<std::string, uint64_t> out;
    for (const auto & p : model.parameters()) {
        if (!p.var.trainable()) out[p.name] = checksum(p.var.value());
    }
    return out;
}

void check_frozen(const Model & model, const std::map<std::string, uint64_t> & before) {
    for (const auto & [name, sum] : frozen_checksums(model)) {
        auto it = before.find(name);
        if (it == before.end() || it->second != sum) {
            throw InternalError("frozen parameter '" + name + "' changed during training");
        }
    }
}

TrainReport run_training(Model & model, const TrainConfig & cfg, const std::vector<TranslationPair> & data,
                         const Tokenizer & tok) {
    std::vector<Prompt> prompts;
    prompts.reserve(data.size());
    for (const auto & pair : data) prompts.push_back(build_prompt(pair, tok, model.config(), cfg.prompt));

    TrainReport report;
    report.trainable = model.trainable_names();
    report.frozen_before = frozen_checksums(model);
    if (prompts.empty()) {
        report.frozen_after = report.frozen_before;
        return report;
    }
    report.initial_loss = mean_loss(model, prompts);

    Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    Rng rng(cfg.seed);
    std::vector<size_t> order(prompts.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Prompt> batch;
    bool done = false;
    for (size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            if (cfg.max_steps > 0 && report.steps >= cfg.max_steps) {
                done = true;
                break;
            }
            batch.clear();
            for (size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
                batch.push_back(prompts[order[i]]);
            }
            model.zero_grad();
            ad::Var loss = translation_loss(model, batch);
            ad::backward(loss);
            adam.step(model.parameters());
            report.step_loss.push_back(loss.item());
            ++report.steps;
        }
        check_frozen(model, report.frozen_before);
    }
    report.final_loss = mean_loss(model, prompts);
    report.frozen_after = frozen_checksums(model);
    check_frozen(model, report.frozen_before);
    return report;
}

} // namespace

TrainReport train(Model & model, const TrainConfig & config, const std::vector<TranslationPair> & data,
                  const Tokenizer & tok) {
    config.validate();
    if (config.selected_layers.empty()) throw ConfigError("train config: selected_layers must be non-empty");
    for (const auto & p : data) {
        if (p.source_lang == kEnglish) throw InvalidArgument("train: translation pair with English source");
    }
    model.set_trainable_layers(config.selected_layers, config.include_projection);
    TrainReport r = run_training(model, config, data, tok);
    model.freeze_all();
    return r;
}

TrainReport pretrain(Model & model, const TrainConfig & config, const std::vector<TranslationPair> & data,
                     const Tokenizer & tok) {
    config.validate();
    model.set_all_trainable(true);
    TrainReport r = run_training(model, config, data, tok);
    model.freeze_all();
    return r;
}

nlohmann::json train_report_to_json(const TrainReport & r) {
    auto hexmap = [](const std::map<std::string, uint64_t> & m) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto & [k, v] : m) j[k] = hex64(v);
        return j;
    };
    return {
        {"steps", r.steps},
        {"initial_loss", r.initial_loss},
        {"final_loss", r.final_loss},
        {"loss_curve", r.step_loss},
        {"trainable", r.trainable},
        {"frozen_checksums_before", hexmap(r.frozen_before)},
        {"frozen_checksums_after", hexmap(r.frozen_after)},
    };
}

} // namespace plast
