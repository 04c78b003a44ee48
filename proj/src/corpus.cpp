#include "plast/corpus.h"

#include "plast/error.h"
#include "plast/rng.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace plast {

const std::vector<std::string> & base_special_tokens() {
    static const std::vector<std::string> specials = {
        "<pad>", "<bos>", "<eos>", "<img>", "Translate", "this", "from", "to", "[", "]", ":", "<nl>",
    };
    return specials;
}

namespace {

std::string language_tag(size_t block) { return block == 0 ? kEnglish : "l" + std::to_string(block); }

std::string name_surface(const std::string & lang) { return "<" + lang + ">"; }

} // namespace

Tokenizer::Tokenizer(std::vector<TokenInfo> tokens) : tokens_(std::move(tokens)) {
    for (size_t i = 0; i < tokens_.size(); ++i) {
        const TokenInfo & t = tokens_[i];
        if (t.id != i) throw FormatError("tokenizer: ids must be dense and ordered");
        if (!by_surface_.emplace(t.surface, i).second) throw FormatError("tokenizer: duplicate surface '" + t.surface + "'");
        if (t.language != kShared &&
            std::find(languages_.begin(), languages_.end(), t.language) == languages_.end()) {
            languages_.push_back(t.language);
        }
    }
    if (!languages_.empty() && languages_.front() != kEnglish) {
        throw FormatError("tokenizer: English block must come first");
    }
    for (const TokenInfo & t : tokens_) {
        if (t.english_id >= tokens_.size()) throw FormatError("tokenizer: translation target out of range");
    }
}

const std::string & Tokenizer::language_of(size_t id) const {
    if (id >= tokens_.size()) throw InvalidArgument("language_of: unknown token id " + std::to_string(id));
    return tokens_[id].language;
}

size_t Tokenizer::id_of(const std::string & surface) const {
    auto it = by_surface_.find(surface);
    if (it == by_surface_.end()) throw InvalidArgument("unknown token '" + surface + "'");
    return it->second;
}

size_t Tokenizer::english_of(size_t id) const {
    if (id >= tokens_.size()) throw InvalidArgument("english_of: unknown token id " + std::to_string(id));
    return tokens_[id].english_id;
}

size_t Tokenizer::language_name_token(const std::string & language) const { return id_of(name_surface(language)); }

std::vector<size_t> Tokenizer::encode(const std::string & text) const {
    std::istringstream in(text);
    std::vector<size_t> ids;
    std::string word;
    while (in >> word) ids.push_back(id_of(word));
    return ids;
}

std::string Tokenizer::decode(const std::vector<size_t> & ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= tokens_.size()) throw InvalidArgument("decode: unknown token id " + std::to_string(ids[i]));
        if (i) out += ' ';
        out += tokens_[ids[i]].surface;
    }
    return out;
}

nlohmann::json Tokenizer::to_json() const {
    nlohmann::json toks = nlohmann::json::array();
    for (const auto & t : tokens_) {
        toks.push_back({{"id", t.id}, {"surface", t.surface}, {"language", t.language}, {"english_id", t.english_id}});
    }
    return {{"format", "plast-tokenizer"}, {"version", 1}, {"languages", languages_}, {"tokens", std::move(toks)}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json & j) {
    try {
        std::vector<TokenInfo> tokens;
        for (const auto & t : j.at("tokens")) {
            tokens.push_back({t.at("id").get<size_t>(), t.at("surface").get<std::string>(),
                              t.at("language").get<std::string>(), t.at("english_id").get<size_t>()});
        }
        return Tokenizer(std::move(tokens));
    } catch (const nlohmann::json::exception & e) {
        throw FormatError(std::string("tokenizer: ") + e.what());
    }
}

size_t SyntheticSpec::vocab_size() const {
    return base_special_tokens().size() + (n_languages + 1) + (n_languages + 1) * tokens_per_block;
}

void SyntheticSpec::validate() const {
    auto fail = [](const std::string & m) { throw ConfigError("synthetic spec: " + m); };
    if (n_languages < 1) fail("n_languages must be >= 1");
    if (tokens_per_block < 1) fail("tokens_per_block must be >= 1");
    if (sentence_min < 1 || sentence_max < sentence_min) fail("invalid sentence length range");
    if (n_images < 1) fail("n_images must be >= 1");
    if (content_per_image > tokens_per_block) {
        fail("block overflow: content_per_image " + std::to_string(content_per_image) + " exceeds block size " +
             std::to_string(tokens_per_block));
    }
    if (n_monitor > n_eval_sentences) fail("n_monitor must not exceed n_eval_sentences");
    // Distinct sentences available, saturating.
    double capacity = 0.0;
    for (size_t len = sentence_min; len <= sentence_max && capacity < 1e18; ++len) {
        capacity += double(n_images) * std::pow(double(tokens_per_block), double(len));
    }
    if (capacity < double(n_train_sentences + n_eval_sentences)) {
        fail("block overflow: blocks of " + std::to_string(tokens_per_block) + " tokens cannot yield " +
             std::to_string(n_train_sentences + n_eval_sentences) + " distinct sentences");
    }
}

Corpus generate(const SyntheticSpec & spec) {
    spec.validate();
    const auto & specials = base_special_tokens();
    const size_t n_blocks = spec.n_languages + 1;
    Rng rng(spec.seed);

    // to_english[b][k]: English-block offset that offset k of block b translates to.
    std::vector<std::vector<size_t>> to_english(n_blocks);
    to_english[0].resize(spec.tokens_per_block);
    std::iota(to_english[0].begin(), to_english[0].end(), 0);
    for (size_t b = 1; b < n_blocks; ++b) {
        to_english[b] = to_english[0];
        rng.shuffle(to_english[b].begin(), to_english[b].end());
    }

    std::vector<TokenInfo> tokens;
    for (const auto & s : specials) tokens.push_back({tokens.size(), s, kShared, tokens.size()});
    for (size_t b = 0; b < n_blocks; ++b) {
        tokens.push_back({tokens.size(), name_surface(language_tag(b)), kShared, tokens.size()});
    }
    const size_t block_base = tokens.size();
    for (size_t b = 0; b < n_blocks; ++b) {
        for (size_t k = 0; k < spec.tokens_per_block; ++k) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s_%03zu", language_tag(b).c_str(), k);
            const size_t id = tokens.size();
            tokens.push_back({id, buf, language_tag(b), block_base + to_english[b][k]});
        }
    }

    Corpus c;
    c.tokenizer = Tokenizer(std::move(tokens));

    // Inverse maps: English offset -> offset in block b.
    std::vector<std::vector<size_t>> from_english(n_blocks, std::vector<size_t>(spec.tokens_per_block));
    for (size_t b = 0; b < n_blocks; ++b)
        for (size_t k = 0; k < spec.tokens_per_block; ++k) from_english[b][to_english[b][k]] = k;

    std::vector<std::vector<size_t>> content(spec.n_images);
    for (auto & set : content) {
        std::vector<size_t> all(spec.tokens_per_block);
        std::iota(all.begin(), all.end(), 0);
        rng.shuffle(all.begin(), all.end());
        set.assign(all.begin(), all.begin() + std::ptrdiff_t(spec.content_per_image));
    }

    struct Sentence {
        size_t image;
        std::vector<size_t> offsets; // English-block offsets
    };
    std::vector<Sentence> sentences;
    std::set<std::pair<size_t, std::vector<size_t>>> seen;
    const size_t wanted = spec.n_train_sentences + spec.n_eval_sentences;
    size_t attempts = 0;
    while (sentences.size() < wanted) {
        if (++attempts > 100 * wanted + 1000) throw ConfigError("synthetic spec: block overflow, too few distinct sentences");
        Sentence s;
        s.image = rng.below(spec.n_images);
        const size_t len = spec.sentence_min + rng.below(spec.sentence_max - spec.sentence_min + 1);
        for (size_t i = 0; i < len; ++i) {
            if (!content[s.image].empty() && rng.uniform() < 0.5) {
                s.offsets.push_back(content[s.image][rng.below(content[s.image].size())]);
            } else {
                s.offsets.push_back(rng.below(spec.tokens_per_block));
            }
        }
        if (seen.emplace(s.image, s.offsets).second) sentences.push_back(std::move(s));
    }

    auto tokens_in = [&](const Sentence & s, size_t b) {
        std::vector<size_t> ids;
        for (size_t off : s.offsets) ids.push_back(block_base + b * spec.tokens_per_block + from_english[b][off]);
        return ids;
    };
    auto make_pairs = [&](size_t begin, size_t end, std::vector<TranslationPair> & out) {
        for (size_t i = begin; i < end; ++i) {
            for (size_t b = 1; b < n_blocks; ++b) {
                out.push_back({sentences[i].image, language_tag(b), tokens_in(sentences[i], b), tokens_in(sentences[i], 0)});
            }
        }
    };
    make_pairs(0, spec.n_train_sentences, c.train);
    make_pairs(spec.n_train_sentences, wanted, c.eval);
    for (size_t i = 0; i < spec.n_train_sentences; ++i) {
        auto en = tokens_in(sentences[i], 0);
        c.pretrain.push_back({sentences[i].image, kEnglish, en, en});
    }
    for (size_t b = 0; b < n_blocks; ++b) {
        for (size_t i = spec.n_train_sentences; i < spec.n_train_sentences + spec.n_monitor; ++i) {
            c.monitor.push_back({sentences[i].image, language_tag(b), tokens_in(sentences[i], b), tokens_in(sentences[i], 0)});
        }
    }
    return c;
}

void write_pairs(const std::filesystem::path & path, const std::vector<TranslationPair> & pairs, const Tokenizer & tok) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto & p : pairs) {
        nlohmann::json j = {{"image_id", p.image_id},
                            {"source_lang", p.source_lang},
                            {"source_text", tok.decode(p.source_tokens)},
                            {"english_text", tok.decode(p.english_tokens)}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<TranslationPair> read_pairs(const std::filesystem::path & path, const Tokenizer & tok) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<TranslationPair> pairs;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            TranslationPair p;
            p.image_id = j.at("image_id").get<size_t>();
            p.source_lang = j.at("source_lang").get<std::string>();
            p.source_tokens = tok.encode(j.at("source_text").get<std::string>());
            p.english_tokens = tok.encode(j.at("english_text").get<std::string>());
            pairs.push_back(std::move(p));
        } catch (const nlohmann::json::exception & e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const InvalidArgument & e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pairs;
}

void write_tokenizer(const std::filesystem::path & path, const Tokenizer & tok) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << tok.to_json().dump(1) << '\n';
}

Tokenizer read_tokenizer(const std::filesystem::path & path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return Tokenizer::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error & e) {
        throw FormatError("tokenizer: " + std::string(e.what()));
    }
}

} // namespace plast
