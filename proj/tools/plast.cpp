#include "plast/capture.h"
#include "plast/corpus.h"
#include "plast/error.h"
#include "plast/lens.h"
#include "plast/model.h"
#include "plast/parallel.h"
#include "plast/selection.h"
#include "plast/stats.h"
#include "plast/trace.h"
#include "plast/trainer.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plast;

namespace {

struct Options {
    std::string traces, stats, selection, ckpt, data, out, config;
    std::optional<uint64_t> seed;
    std::vector<size_t> layers;
    size_t sample = 0;
};

// Everything a run can be configured with; --config may override any field.
struct Resolved {
    SyntheticSpec corpus;
    ModelConfig model;
    TrainConfig pretrain;
    TrainConfig train;
    MaskOptions mask;
    SelectionOptions selection;
    size_t lens_k = 5;
};

Resolved defaults() {
    Resolved r;
    r.pretrain.learning_rate = 1e-2;
    r.pretrain.epochs = 10;
    r.pretrain.seed = 1;
    r.train.learning_rate = 1e-2;
    r.train.epochs = 2;
    r.train.seed = 2;
    r.model.max_seq_len = 48;
    return r;
}

json train_to_json(const TrainConfig & t) {
    return {{"selected_layers", t.selected_layers},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs},
            {"optimizer", t.optimizer},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"eps", t.eps},
            {"seed", t.seed},
            {"include_projection", t.include_projection},
            {"max_steps", t.max_steps},
            {"instruction_prompt", t.prompt.instruction}};
}

json to_json(const Resolved & r) {
    const ModelConfig & m = r.model;
    const SyntheticSpec & c = r.corpus;
    return {
        {"corpus",
         {{"n_languages", c.n_languages},
          {"tokens_per_block", c.tokens_per_block},
          {"sentence_min", c.sentence_min},
          {"sentence_max", c.sentence_max},
          {"n_images", c.n_images},
          {"content_per_image", c.content_per_image},
          {"n_train_sentences", c.n_train_sentences},
          {"n_eval_sentences", c.n_eval_sentences},
          {"n_monitor", c.n_monitor},
          {"seed", c.seed}}},
        {"model",
         {{"n_layers", m.n_layers},
          {"d_model", m.d_model},
          {"d_inter", m.d_inter},
          {"n_heads", m.n_heads},
          {"vocab_size", m.vocab_size},
          {"n_vision_tokens", m.n_vision_tokens},
          {"n_images", m.n_images},
          {"max_seq_len", m.max_seq_len},
          {"activation", ad::activation_name(m.activation)},
          {"seed", m.seed},
          {"gate_offset", m.gate_offset}}},
        {"pretrain", train_to_json(r.pretrain)},
        {"train", train_to_json(r.train)},
        {"mask",
         {{"aggregation", aggregation_name(r.mask.aggregation)},
          {"skip_leading_positions", r.mask.skip_leading_positions}}},
        {"selection", {{"exclude_english", r.selection.exclude_english}, {"max_layers", r.selection.max_layers}}},
        {"lens", {{"k", r.lens_k}}},
    };
}

template <class T>
void take(const json & j, const char * key, T & field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

void check_keys(const json & j, const json & known, const std::string & where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto & [k, v] : j.items())
        if (!known.contains(k)) throw ConfigError("config: unknown key " + where + "." + k);
}

void apply_train(const json & j, TrainConfig & t) {
    take(j, "selected_layers", t.selected_layers);
    take(j, "learning_rate", t.learning_rate);
    take(j, "batch_size", t.batch_size);
    take(j, "epochs", t.epochs);
    take(j, "optimizer", t.optimizer);
    take(j, "beta1", t.beta1);
    take(j, "beta2", t.beta2);
    take(j, "eps", t.eps);
    take(j, "seed", t.seed);
    take(j, "include_projection", t.include_projection);
    take(j, "max_steps", t.max_steps);
    take(j, "instruction_prompt", t.prompt.instruction);
}

void apply_overrides(const json & o, Resolved & r) {
    const json known = to_json(r);
    check_keys(o, known, "root");
    for (const auto & [section, body] : o.items()) check_keys(body, known[section], section);
    try {
        if (o.contains("corpus")) {
            const json & j = o["corpus"];
            SyntheticSpec & c = r.corpus;
            take(j, "n_languages", c.n_languages);
            take(j, "tokens_per_block", c.tokens_per_block);
            take(j, "sentence_min", c.sentence_min);
            take(j, "sentence_max", c.sentence_max);
            take(j, "n_images", c.n_images);
            take(j, "content_per_image", c.content_per_image);
            take(j, "n_train_sentences", c.n_train_sentences);
            take(j, "n_eval_sentences", c.n_eval_sentences);
            take(j, "n_monitor", c.n_monitor);
            take(j, "seed", c.seed);
        }
        if (o.contains("model")) {
            const json & j = o["model"];
            ModelConfig & m = r.model;
            take(j, "n_layers", m.n_layers);
            take(j, "d_model", m.d_model);
            take(j, "d_inter", m.d_inter);
            take(j, "n_heads", m.n_heads);
            take(j, "vocab_size", m.vocab_size);
            take(j, "n_vision_tokens", m.n_vision_tokens);
            take(j, "n_images", m.n_images);
            take(j, "max_seq_len", m.max_seq_len);
            if (j.contains("activation")) m.activation = ad::activation_from_name(j["activation"].get<std::string>());
            take(j, "seed", m.seed);
            take(j, "gate_offset", m.gate_offset);
        }
        if (o.contains("pretrain")) apply_train(o["pretrain"], r.pretrain);
        if (o.contains("train")) apply_train(o["train"], r.train);
        if (o.contains("mask")) {
            const json & j = o["mask"];
            if (j.contains("aggregation")) r.mask.aggregation = aggregation_from_name(j["aggregation"].get<std::string>());
            take(j, "skip_leading_positions", r.mask.skip_leading_positions);
        }
        if (o.contains("selection")) {
            take(o["selection"], "exclude_english", r.selection.exclude_english);
            take(o["selection"], "max_layers", r.selection.max_layers);
        }
        if (o.contains("lens")) take(o["lens"], "k", r.lens_k);
    } catch (const json::exception & e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

json read_json(const fs::path & p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception & e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path & p, const json & j) {
    std::ofstream out(p, std::ios::binary);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("cannot write " + p.string());
}

std::string require(const std::string & value, const char * flag) {
    if (value.empty()) throw ConfigError(std::string("missing required flag ") + flag);
    return value;
}

fs::path out_dir(const Options & o) {
    fs::path d = require(o.out, "--out");
    fs::create_directories(d);
    return d;
}

Resolved resolve(const Options & o) {
    Resolved r = defaults();
    if (!o.config.empty()) apply_overrides(read_json(o.config), r);
    return r;
}

void log_config(const fs::path & dir, const std::string & cmd, const Options & o, const Resolved & r) {
    json j = to_json(r);
    j["subcommand"] = cmd;
    json paths = json::object();
    for (auto [k, v] : {std::pair{"traces", &o.traces}, {"stats", &o.stats}, {"selection", &o.selection},
                        {"ckpt", &o.ckpt}, {"data", &o.data}, {"out", &o.out}, {"config", &o.config}})
        if (!v->empty()) paths[k] = *v;
    j["paths"] = paths;
    if (o.seed) j["seed_flag"] = *o.seed;
    j["threads"] = worker_count();
    write_json(dir / ("config." + cmd + ".json"), j);
}

// Pairs file plus the tokenizer stored beside it.
std::pair<Tokenizer, std::vector<TranslationPair>> load_data(const std::string & data) {
    fs::path p = require(data, "--data");
    Tokenizer tok = read_tokenizer(p.parent_path() / "tokenizer.json");
    return {tok, read_pairs(p, tok)};
}

void write_traces(const std::vector<TraceFile> & traces, const fs::path & dir) {
    fs::create_directories(dir);
    for (const TraceFile & t : traces) write_trace(t, dir / (t.language + ".pltr"));
}

StatsResult analyze_dir(const fs::path & dir) {
    std::vector<TraceFile> traces = read_trace_dir(dir);
    return aggregate(traces);
}

// ---- subcommands ----

void do_gen(const Options & o, Resolved r) {
    if (o.seed) r.corpus.seed = *o.seed;
    fs::path dir = out_dir(o);
    log_config(dir, "gen", o, r);
    Corpus c = generate(r.corpus);
    write_tokenizer(dir / "tokenizer.json", c.tokenizer);
    write_pairs(dir / "train.jsonl", c.train, c.tokenizer);
    write_pairs(dir / "eval.jsonl", c.eval, c.tokenizer);
    write_pairs(dir / "monitor.jsonl", c.monitor, c.tokenizer);
    write_pairs(dir / "pretrain.jsonl", c.pretrain, c.tokenizer);
}

void do_init(const Options & o, Resolved r) {
    if (o.seed) r.model.seed = *o.seed;
    if (!o.data.empty()) r.model.vocab_size = read_tokenizer(fs::path(o.data).parent_path() / "tokenizer.json").vocab_size();
    fs::path dir = out_dir(o);
    log_config(dir, "init", o, r);
    save_checkpoint(Model(r.model), dir / "model.plck");
}

void do_pretrain(const Options & o, Resolved r) {
    if (o.seed) r.pretrain.seed = *o.seed;
    fs::path dir = out_dir(o);
    log_config(dir, "pretrain", o, r);
    Model m = load_checkpoint(require(o.ckpt, "--ckpt"));
    auto [tok, pairs] = load_data(o.data);
    TrainReport rep = pretrain(m, r.pretrain, pairs, tok);
    save_checkpoint(m, dir / "model.plck");
    write_json(dir / "pretrain_report.json", train_report_to_json(rep));
}

void do_capture(const Options & o, Resolved r) {
    fs::path dir = out_dir(o);
    log_config(dir, "capture", o, r);
    Model m = load_checkpoint(require(o.ckpt, "--ckpt"));
    auto [tok, pairs] = load_data(o.data);
    write_traces(capture_traces(m, pairs, r.mask), dir);
}

void do_analyze(const Options & o, Resolved r) {
    fs::path dir = out_dir(o);
    log_config(dir, "analyze", o, r);
    write_json(dir / "stats.json", stats_to_json(analyze_dir(require(o.traces, "--traces"))));
}

void do_select(const Options & o, Resolved r) {
    fs::path dir = out_dir(o);
    log_config(dir, "select", o, r);
    SelectionInput in = selection_input_from_json(read_json(require(o.stats, "--stats")));
    write_json(dir / "selection.json", selection_to_json(run_selection(in, r.selection)));
}

void do_train(const Options & o, Resolved r) {
    if (o.seed) r.train.seed = *o.seed;
    if (!o.layers.empty()) {
        r.train.selected_layers = {o.layers.begin(), o.layers.end()};
    } else if (!o.selection.empty()) {
        r.train.selected_layers = selection_from_json(read_json(o.selection)).selected;
    }
    fs::path dir = out_dir(o);
    log_config(dir, "train", o, r);
    Model m = load_checkpoint(require(o.ckpt, "--ckpt"));
    auto [tok, pairs] = load_data(o.data);
    TrainReport rep = train(m, r.train, pairs, tok);
    save_checkpoint(m, dir / "model.plck");
    write_json(dir / "train_report.json", train_report_to_json(rep));
}

void do_lens(const Options & o, Resolved r) {
    fs::path dir = out_dir(o);
    log_config(dir, "lens", o, r);
    Model m = load_checkpoint(require(o.ckpt, "--ckpt"));
    auto [tok, pairs] = load_data(o.data);
    if (o.sample >= pairs.size()) throw InvalidArgument("--sample out of range");
    const TranslationPair & p = pairs[o.sample];
    const std::vector<size_t> ids = monitor_tokens(p);
    std::optional<size_t> image;
    if (m.config().n_vision_tokens > 0) image = p.image_id;
    ForwardResult fr = m.forward(ids, image, true);
    json lens = lens_to_json(logit_lens(m, *fr.capture, r.lens_k));
    lens["sample"] = o.sample;
    lens["language"] = p.source_lang;
    lens["input"] = tok.decode(ids);
    write_json(dir / "lens.json", lens);
    if (m.config().n_vision_tokens > 0)
        write_json(dir / "attn.json",
                   attention_mass_to_json(vision_attention_mass(*fr.capture), m.config().n_vision_tokens));
}

json msd_avg_summary(const StatsResult & s) {
    std::vector<std::vector<double>> ratio;
    for (const auto & l : s.languages) ratio.push_back(l.ratio);
    std::set<size_t> all;
    for (size_t i = 1; i <= s.n_layers; ++i) all.insert(i);
    std::vector<double> msd;
    for (const auto & [layer, v] : msd_per_layer(ratio, all)) msd.push_back(v);
    return {{"msd", msd}, {"avg_overlap", s.overlap.avg}};
}

// gen -> init -> pretrain -> capture -> analyze -> select -> train, then a
// second capture/analyze on the tuned model for the before/after report.
void do_pipeline(const Options & o, Resolved r) {
    if (o.seed) r.corpus.seed = *o.seed;
    fs::path root = out_dir(o);
    log_config(root, "pipeline", o, r);

    Corpus c = generate(r.corpus);
    fs::create_directories(root / "data");
    write_tokenizer(root / "data" / "tokenizer.json", c.tokenizer);
    write_pairs(root / "data" / "train.jsonl", c.train, c.tokenizer);
    write_pairs(root / "data" / "monitor.jsonl", c.monitor, c.tokenizer);
    write_pairs(root / "data" / "pretrain.jsonl", c.pretrain, c.tokenizer);

    r.model.vocab_size = c.tokenizer.vocab_size();
    Model m(r.model);
    fs::create_directories(root / "base");
    TrainReport pre = pretrain(m, r.pretrain, c.pretrain, c.tokenizer);
    save_checkpoint(m, root / "base" / "model.plck");
    write_json(root / "base" / "pretrain_report.json", train_report_to_json(pre));

    write_traces(capture_traces(m, c.monitor, r.mask), root / "traces_before");
    StatsResult before = analyze_dir(root / "traces_before");
    write_json(root / "stats_before.json", stats_to_json(before));

    std::set<size_t> layers;
    if (!o.layers.empty()) {
        layers = {o.layers.begin(), o.layers.end()};
    } else {
        LayerSelection sel = run_selection(selection_input_from_json(stats_to_json(before)), r.selection);
        write_json(root / "selection.json", selection_to_json(sel));
        layers = sel.selected;
    }
    r.train.selected_layers = layers;

    fs::create_directories(root / "tuned");
    TrainReport rep = train(m, r.train, c.train, c.tokenizer);
    save_checkpoint(m, root / "tuned" / "model.plck");
    write_json(root / "tuned" / "train_report.json", train_report_to_json(rep));

    write_traces(capture_traces(m, c.monitor, r.mask), root / "traces_after");
    StatsResult after = analyze_dir(root / "traces_after");
    write_json(root / "stats_after.json", stats_to_json(after));

    json report = {{"selected_layers", layers},
                   {"initial_loss", rep.initial_loss},
                   {"final_loss", rep.final_loss},
                   {"loss_ratio", rep.final_loss / rep.initial_loss},
                   {"before", msd_avg_summary(before)},
                   {"after", msd_avg_summary(after)}};
    write_json(root / "report.json", report);
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"plast: language-specific layer analysis and selective tuning on a toy vision-language model"};
    app.require_subcommand(1);
    Options o;

    auto add = [&](const std::string & name, const std::string & help) {
        CLI::App * sub = app.add_subcommand(name, help);
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--config", o.config, "JSON file of config overrides");
        return sub;
    };
    CLI::App * gen = add("gen", "generate the synthetic corpus");
    CLI::App * init = add("init", "write a freshly initialised checkpoint");
    CLI::App * pre = add("pretrain", "full-parameter English echo pretraining");
    CLI::App * cap = add("capture", "record activation traces for monitoring questions");
    CLI::App * ana = add("analyze", "per-language activation and overlap statistics");
    CLI::App * sel = add("select", "choose layers to fine-tune from stats.json");
    CLI::App * trn = add("train", "fine-tune only the selected layers");
    CLI::App * lens = add("lens", "logit-lens grid and vision attention for one sample");
    CLI::App * pipe = add("pipeline", "run every stage end to end");

    for (CLI::App * s : {gen, init, pre, trn, pipe}) s->add_option("--seed", o.seed, "seed override");
    for (CLI::App * s : {init, pre, cap, trn, lens}) s->add_option("--data", o.data, "pairs .jsonl with tokenizer.json beside it");
    for (CLI::App * s : {pre, cap, trn, lens}) s->add_option("--ckpt", o.ckpt, "model checkpoint");
    ana->add_option("--traces", o.traces, "directory of .pltr files");
    sel->add_option("--stats", o.stats, "stats.json");
    trn->add_option("--selection", o.selection, "selection.json");
    for (CLI::App * s : {trn, pipe}) s->add_option("--layers", o.layers, "explicit layer list, bypassing selection");
    lens->add_option("--sample", o.sample, "index into the pairs file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        return app.exit(e);
    }

    std::string cmd = app.get_subcommands().front()->get_name();
    try {
        Resolved r = resolve(o);
        if (cmd == "gen") do_gen(o, r);
        else if (cmd == "init") do_init(o, r);
        else if (cmd == "pretrain") do_pretrain(o, r);
        else if (cmd == "capture") do_capture(o, r);
        else if (cmd == "analyze") do_analyze(o, r);
        else if (cmd == "select") do_select(o, r);
        else if (cmd == "train") do_train(o, r);
        else if (cmd == "lens") do_lens(o, r);
        else do_pipeline(o, r);
    } catch (const Error & e) {
        std::cerr << json{{"error", e.kind()}, {"subcommand", cmd}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception & e) {
        std::cerr << json{{"error", "unexpected"}, {"subcommand", cmd}, {"message", e.what()}}.dump() << "\n";
        return 2;
    }
    return 0;
}
