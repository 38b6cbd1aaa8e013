// wordmelody: command-line front end.
//
//   wordmelody ingest     --manifest corpus/manifest.json
//   wordmelody stats
//   wordmelody train-hmm  [--smoothing 0.01]
//   wordmelody train      [--epochs 15 --mu 0.0001 ...]
//   wordmelody generate   [--segments 16 --seed 7 --output song.mid]
//   wordmelody check
//
// Every option can also be given in a flat `key = value` file passed with
// --config; flags win over the file, the file over built-in defaults.
// Artifacts go to --out-dir (env WORDMELODY_OUT_DIR, default ./out).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "wordmelody/check.hpp"
#include "wordmelody/checkpoint.hpp"
#include "wordmelody/corpus.hpp"
#include "wordmelody/hmm.hpp"
#include "wordmelody/pipeline.hpp"
#include "wordmelody/vocab.hpp"

namespace fs = std::filesystem;
using namespace wordmelody;

namespace {

struct Options {
    fs::path out_dir = "out";
    std::string manifest;
    std::string samples;
    std::string vocab;
    std::string hmm_path;
    std::string model;
    std::string output;

    double smoothing = 0.01;

    int epochs = 15;
    std::size_t batch_size = 16;
    double learning_rate = 0.001;
    double dropout = 0.5;
    double mu = 0.0001;
    int p_min = 60;
    int p_max = 72;
    std::uint64_t train_seed = 1;
    int checkpoint_every = 0;
    std::size_t embed_dim = 256;
    std::size_t hidden_dim = 256;
    std::string condition_feed = "every";
    int safe_zone_min = 5;
    int safe_zone_max = 20;

    std::size_t segments = 16;
    std::uint64_t seed = 7;
    double temperature = 1.0;
    std::size_t max_words = 32;
    bool resample_empty = false;
    bool posterior_chords = false;
    double tempo = 120.0;
    std::uint16_t tpq = 480;
};

fs::path or_default(const std::string& value, const fs::path& fallback) { return value.empty() ? fallback : fs::path(value); }

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    out << j.dump(2) << "\n";
}

corpus::Corpus load_samples(const Options& o) {
    return corpus::samples_from_json(read_json(or_default(o.samples, o.out_dir / "samples.json")));
}

struct LoadedVocab {
    VocabBundle bundle;
    std::optional<std::uint64_t> corpus_fingerprint;
};

LoadedVocab load_vocab(const Options& o) {
    const auto j = read_json(or_default(o.vocab, o.out_dir / "vocab.json"));
    LoadedVocab v{vocab_from_json(j), std::nullopt};
    if (j.contains("corpus_fingerprint")) v.corpus_fingerprint = std::stoull(j["corpus_fingerprint"].get<std::string>(), nullptr, 16);
    return v;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

int run_ingest(const Options& o) {
    if (o.manifest.empty()) throw Error("ingest needs --manifest");
    const auto manifest = corpus::load_manifest(o.manifest);
    const auto c = corpus::ingest_corpus(manifest);
    for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
    const auto vocab = build_vocab(c.samples);
    const auto table = condition_table(c.samples);
    fs::create_directories(o.out_dir);
    write_json(o.out_dir / "samples.json", corpus::samples_to_json(c));
    auto vj = vocab_to_json(vocab, table);
    vj["corpus_fingerprint"] = hex(corpus::corpus_fingerprint(c.samples));
    write_json(o.out_dir / "vocab.json", vj);
    std::cerr << "ingested " << c.song_names.size() << " songs, " << c.samples.size() << " samples, " << vocab.word_count()
              << " words (+2 reserved), " << table.size() << " chord tokens\n";
    return 0;
}

int run_stats(const Options& o) {
    corpus::Corpus c = o.manifest.empty() ? load_samples(o) : corpus::ingest_corpus(corpus::load_manifest(o.manifest));
    const auto report = corpus::stats_report(corpus::compute_stats(c.samples));
    fs::create_directories(o.out_dir);
    write_json(o.out_dir / "stats.json", report);
    std::cout << report.dump(2) << "\n";
    return 0;
}

int run_train_hmm(const Options& o) {
    const auto c = load_samples(o);
    const auto v = load_vocab(o);
    std::cerr << "hmm smoothing " << o.smoothing << "\n";
    const auto params = hmm::estimate_params(c.samples, v.bundle.chords, o.smoothing);
    fs::create_directories(o.out_dir);
    write_json(or_default(o.hmm_path, o.out_dir / "hmm.json"), hmm::params_to_json(params));
    return 0;
}

int run_train(const Options& o) {
    const auto c = load_samples(o);
    const auto v = load_vocab(o);
    if (v.corpus_fingerprint && *v.corpus_fingerprint != corpus::corpus_fingerprint(c.samples))
        throw Error("vocabulary was built from a different corpus (fingerprint mismatch)");

    pipeline::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.learning_rate = o.learning_rate;
    cfg.dropout_p = o.dropout;
    cfg.reg = {o.p_min, o.p_max, o.mu};
    cfg.seed = o.train_seed;
    cfg.checkpoint_every = o.checkpoint_every;
    cfg.embed_dim = o.embed_dim;
    cfg.hidden_dim = o.hidden_dim;
    cfg.feed = o.condition_feed == "first" ? neural::ConditionFeed::FirstStepOnly : neural::ConditionFeed::EveryStep;
    cfg.safe_zone_min = o.safe_zone_min;
    cfg.safe_zone_max = o.safe_zone_max;
    if (o.checkpoint_every > 0) {
        cfg.checkpoint_dir = o.out_dir / "checkpoints";
        fs::create_directories(*cfg.checkpoint_dir);
    }
    cfg.validate();
    if (!cfg.in_safe_zone())
        std::cerr << "warning: " << cfg.epochs << " epochs is outside the safe zone [" << cfg.safe_zone_min << ", "
                  << cfg.safe_zone_max << ")\n";
    std::cerr << "train seed " << cfg.seed << ", " << c.samples.size() << " samples, vocabulary " << v.bundle.vocab.size()
              << ", parameters "
              << neural::parameter_count({v.bundle.vocab.size(), cfg.embed_dim, cfg.hidden_dim, v.bundle.chords.size() + kPartCount})
              << "\n";

    fs::create_directories(o.out_dir);
    std::ofstream log(o.out_dir / "metrics.jsonl");
    const auto result = pipeline::train(c.samples, v.bundle.vocab, v.bundle.chords, cfg, [&](const pipeline::EpochMetrics& m) {
        log << m.to_json().dump() << "\n";
        log.flush();
        std::cerr << "epoch " << m.epoch << " loss " << m.mean_loss << " penalty " << m.mean_penalty << "\n";
    });
    save_checkpoint(or_default(o.model, o.out_dir / "model.ckpt"),
                    {v.bundle.vocab.fingerprint(), static_cast<std::uint32_t>(cfg.epochs), result.params});
    return 0;
}

int run_generate(const Options& o) {
    const auto v = load_vocab(o);
    const auto structure = hmm::params_from_json(read_json(or_default(o.hmm_path, o.out_dir / "hmm.json")));
    const auto ck = load_checkpoint(or_default(o.model, o.out_dir / "model.ckpt"), v.bundle.vocab.fingerprint());
    if (ck.params.config.condition_dim != v.bundle.chords.size() + kPartCount)
        throw Error("checkpoint condition size does not match the chord table");

    pipeline::GenerateOptions g;
    g.segment_count = o.segments;
    g.seed = o.seed;
    g.temperature = o.temperature;
    g.max_words = o.max_words;
    g.resample_empty = o.resample_empty;
    g.posterior_chords = o.posterior_chords;
    g.assemble.tempo_bpm = o.tempo;
    g.assemble.ticks_per_quarter = o.tpq;
    std::cerr << "generate seed " << g.seed << " (segment k uses seed " << g.seed << "+k)\n";
    const auto song = pipeline::generate_song(ck.params, v.bundle.vocab, v.bundle.chords, structure, g);
    for (std::size_t k = 0; k < song.plan.segments.size(); ++k)
        std::cerr << "  segment " << k << ": " << part_name(song.plan.segments[k].part) << " "
                  << song.plan.segments[k].chord.name() << ", " << song.segments[k].size() << " notes\n";
    const auto out = or_default(o.output, o.out_dir / "song.mid");
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    smf::write_file(out, smf::write_midi(song.document));
    return 0;
}

int run_check() {
    bool all = true;
    for (const auto& r : check::run_all()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        all = all && r.passed;
    }
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Note-word melody generation toolkit"};
    app.set_config("--config", "", "Flat key = value configuration file");
    app.require_subcommand(1);
    app.fallthrough();
    Options o;

    app.add_option("--out-dir", o.out_dir, "Output directory")->envname("WORDMELODY_OUT_DIR")->capture_default_str();
    app.add_option("--manifest", o.manifest, "Corpus manifest (JSON)");
    app.add_option("--samples", o.samples, "Sample store (default <out-dir>/samples.json)");
    app.add_option("--vocab", o.vocab, "Vocabulary file (default <out-dir>/vocab.json)");
    app.add_option("--hmm", o.hmm_path, "HMM parameter file (default <out-dir>/hmm.json)");
    app.add_option("--model", o.model, "Checkpoint (default <out-dir>/model.ckpt)");
    app.add_option("--output", o.output, "Generated MIDI path (default <out-dir>/song.mid)");

    app.add_option("--smoothing", o.smoothing, "Additive HMM smoothing")->capture_default_str()->check(CLI::NonNegativeNumber);

    app.add_option("--epochs", o.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--batch-size", o.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--learning-rate", o.learning_rate)->capture_default_str();
    app.add_option("--dropout", o.dropout)->capture_default_str()->check(CLI::Range(0.0, 0.99));
    app.add_option("--mu", o.mu, "Pitch-range regularization coefficient")->capture_default_str()->check(CLI::NonNegativeNumber);
    app.add_option("--p-min", o.p_min)->capture_default_str()->check(CLI::Range(0, 127));
    app.add_option("--p-max", o.p_max)->capture_default_str()->check(CLI::Range(0, 127));
    app.add_option("--train-seed", o.train_seed)->capture_default_str();
    app.add_option("--checkpoint-every", o.checkpoint_every, "Epochs between checkpoints (0 = final only)")->capture_default_str();
    app.add_option("--embed-dim", o.embed_dim)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--hidden-dim", o.hidden_dim)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--condition-feed", o.condition_feed, "every | first")->capture_default_str()->check(CLI::IsMember({"every", "first"}));
    app.add_option("--safe-zone-min", o.safe_zone_min)->capture_default_str();
    app.add_option("--safe-zone-max", o.safe_zone_max)->capture_default_str();

    app.add_option("--segments", o.segments, "2-bar segments per song")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--seed", o.seed, "Generation seed")->capture_default_str();
    app.add_option("--temperature", o.temperature, "0 = greedy")->capture_default_str()->check(CLI::NonNegativeNumber);
    app.add_option("--max-words", o.max_words)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_flag("--resample-empty", o.resample_empty, "Resample segments that come out empty");
    app.add_flag("--posterior-chords", o.posterior_chords, "Sample chords from the posterior instead of Viterbi");
    app.add_option("--tempo", o.tempo)->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--tpq", o.tpq, "Ticks per quarter note")->capture_default_str()->check(CLI::Range(4, 32764));

    auto* ingest = app.add_subcommand("ingest", "Tokenize a corpus and build the vocabulary");
    auto* stats = app.add_subcommand("stats", "Print corpus statistics");
    auto* train_hmm = app.add_subcommand("train-hmm", "Estimate the part/chord HMM");
    auto* train = app.add_subcommand("train", "Train the melody model");
    auto* generate = app.add_subcommand("generate", "Generate a song as MIDI");
    auto* check = app.add_subcommand("check", "Run the built-in verification suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "wordmelody: error: " << e.what() << "\n";
        return e.get_exit_code();
    }

    try {
        if (*ingest) return run_ingest(o);
        if (*stats) return run_stats(o);
        if (*train_hmm) return run_train_hmm(o);
        if (*train) return run_train(o);
        if (*generate) return run_generate(o);
        if (*check) return run_check();
    } catch (const std::exception& e) {
        std::cerr << "wordmelody: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
