#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace plast {

inline const std::string kEnglish = "en";
inline const std::string kShared = "shared";

struct TokenInfo {
    size_t id = 0;
    std::string surface;
    std::string language;   // "shared" for special tokens
    size_t english_id = 0;  // translation of a language-block token; id itself for English and specials
};

// Token table: special tokens first, then one contiguous block per language
// with English as block 0.
class Tokenizer {
public:
    Tokenizer() = default;
    explicit Tokenizer(std::vector<TokenInfo> tokens);

    size_t vocab_size() const noexcept { return tokens_.size(); }
    const std::vector<TokenInfo> & tokens() const noexcept { return tokens_; }
    // English first, then the other languages in block order.
    const std::vector<std::string> & languages() const noexcept { return languages_; }

    const std::string & language_of(size_t id) const;
    size_t id_of(const std::string & surface) const;
    size_t english_of(size_t id) const;
    // Token standing for a language's name inside prompts, e.g. "<l1>".
    size_t language_name_token(const std::string & language) const;

    std::vector<size_t> encode(const std::string & text) const;
    std::string decode(const std::vector<size_t> & ids) const;

    nlohmann::json to_json() const;
    static Tokenizer from_json(const nlohmann::json & j);

private:
    std::vector<TokenInfo> tokens_;
    std::vector<std::string> languages_;
    std::unordered_map<std::string, size_t> by_surface_;
};

// Special token surfaces, in id order; language-name tokens follow them.
const std::vector<std::string> & base_special_tokens();

struct SyntheticSpec {
    size_t n_languages = 3;        // non-English languages
    size_t tokens_per_block = 56;
    size_t sentence_min = 4;
    size_t sentence_max = 4;
    size_t n_images = 16;
    size_t content_per_image = 8;  // English-block tokens tied to each image
    size_t n_train_sentences = 1200;
    size_t n_eval_sentences = 100;
    size_t n_monitor = 100;        // parallel monitoring questions per language
    uint64_t seed = 7;

    size_t vocab_size() const;
    void validate() const;
};

struct TranslationPair {
    size_t image_id = 0;
    std::string source_lang;
    std::vector<size_t> source_tokens;
    std::vector<size_t> english_tokens;

    bool operator==(const TranslationPair &) const = default;
};

struct Corpus {
    Tokenizer tokenizer;
    std::vector<TranslationPair> train;    // non-English -> English
    std::vector<TranslationPair> eval;     // disjoint English sentences
    std::vector<TranslationPair> monitor;  // parallel questions; includes English records
    std::vector<TranslationPair> pretrain; // English -> English echo pairs
};

Corpus generate(const SyntheticSpec & spec);

// One JSON object per line: {image_id, source_lang, source_text, english_text}.
void write_pairs(const std::filesystem::path & path, const std::vector<TranslationPair> & pairs, const Tokenizer & tok);
std::vector<TranslationPair> read_pairs(const std::filesystem::path & path, const Tokenizer & tok);

void write_tokenizer(const std::filesystem::path & path, const Tokenizer & tok);
Tokenizer read_tokenizer(const std::filesystem::path & path);

} // namespace plast
