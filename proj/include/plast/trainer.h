#pragma once

#include "plast/autodiff.h"
#include "plast/corpus.h"
#include "plast/model.h"

#include <json.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace plast {

struct PromptOptions {
    // Wrap source/target in the "Translate this from [src] to [English]:" template.
    bool instruction = true;
};

// Text part of a training sequence; vision tokens (when image_id is set)
// precede it inside the model.
struct Prompt {
    std::optional<size_t> image_id;
    std::vector<size_t> tokens;
    std::vector<uint8_t> target_mask; // 1 exactly on English target tokens
    size_t target_start = 0;          // index into tokens
};

Prompt build_prompt(const TranslationPair & pair, const Tokenizer & tok, const ModelConfig & model,
                    const PromptOptions & options = {});

// Mean next-token cross-entropy over the target positions of all prompts.
ad::Var translation_loss(const Model & model, std::span<const Prompt> batch);
double mean_loss(const Model & model, std::span<const Prompt> prompts);

struct TrainConfig {
    std::set<size_t> selected_layers;
    double learning_rate = 2e-5;
    size_t batch_size = 8;
    size_t epochs = 2;
    std::string optimizer = "adam";
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 0;
    bool include_projection = false;
    size_t max_steps = 0; // 0 = run all epochs
    PromptOptions prompt;

    void validate() const;
};

struct TrainReport {
    size_t steps = 0;
    std::vector<double> step_loss;
    double initial_loss = 0.0; // mean per-token loss over the data before training
    double final_loss = 0.0;
    std::vector<std::string> trainable;
    std::map<std::string, uint64_t> frozen_before;
    std::map<std::string, uint64_t> frozen_after;
};

// Fine-tunes only the selected layers (and the vision projection when
// flagged) on non-English -> English translation pairs. Throws
// InternalError if any frozen parameter changes.
TrainReport train(Model & model, const TrainConfig & config, const std::vector<TranslationPair> & data,
                  const Tokenizer & tok);

// Full-parameter training (vision table excepted) used to build the base
// model; accepts English-to-English pairs. selected_layers is ignored.
TrainReport pretrain(Model & model, const TrainConfig & config, const std::vector<TranslationPair> & data,
                     const Tokenizer & tok);

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
    // Updates every trainable parameter from its accumulated grad.
    void step(const std::vector<NamedParam> & params);

private:
    struct Slot {
        Tensor m, v;
    };
    double lr_, b1_, b2_, eps_;
    size_t t_ = 0;
    std::map<const ad::Node *, Slot> state_;
};

nlohmann::json train_report_to_json(const TrainReport & r);

} // namespace plast
