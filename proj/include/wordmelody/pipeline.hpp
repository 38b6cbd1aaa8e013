#ifndef WORDMELODY_PIPELINE_HPP
#define WORDMELODY_PIPELINE_HPP

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordmelody/checkpoint.hpp"
#include "wordmelody/chord.hpp"
#include "wordmelody/corpus.hpp"
#include "wordmelody/hmm.hpp"
#include "wordmelody/neural.hpp"
#include "wordmelody/rng.hpp"
#include "wordmelody/smf.hpp"
#include "wordmelody/vocab.hpp"

namespace wordmelody::pipeline {

using corpus::MelodySample;
using neural::ModelParams;
using neural::RangeRegConfig;

inline constexpr int kGeneratedVelocity = 96;

struct TrainConfig {
    int epochs = 15;
    std::size_t batch_size = 16;
    double learning_rate = 0.001;
    double dropout_p = 0.5;
    RangeRegConfig reg;
    std::uint64_t seed = 1;
    int checkpoint_every = 0;  // epochs between checkpoints; 0 disables
    std::optional<std::filesystem::path> checkpoint_dir;
    std::size_t embed_dim = 256;
    std::size_t hidden_dim = 256;
    neural::ConditionFeed feed = neural::ConditionFeed::EveryStep;
    // Epoch window in which the model is in tune but not yet copying the
    // corpus. Only used to warn when `epochs` falls outside it.
    int safe_zone_min = 5;
    int safe_zone_max = 20;

    void validate() const {
        if (epochs < 1) throw Error("epochs must be >= 1");
        if (batch_size < 1) throw Error("batch size must be >= 1");
        if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
        if (dropout_p < 0.0 || dropout_p >= 1.0) throw Error("dropout must be in [0, 1)");
        if (reg.p_min > reg.p_max || reg.mu < 0.0) throw Error("invalid range regularization settings");
        if (checkpoint_every < 0) throw Error("checkpoint cadence must be >= 0");
    }

    bool in_safe_zone() const { return epochs >= safe_zone_min && epochs < safe_zone_max; }
};

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    double mean_penalty = 0.0;
    double wall_seconds = 0.0;

    nlohmann::ordered_json to_json() const {
        return {{"epoch", epoch}, {"mean_loss", mean_loss}, {"mean_penalty", mean_penalty}, {"wall_time_s", wall_seconds}};
    }
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochMetrics> metrics;
    std::vector<double> step_losses;  // mean batch cross-entropy before each update
    std::vector<std::filesystem::path> checkpoints;
};

// One tokenized training pair.
struct EncodedSample {
    std::vector<double> condition;
    std::vector<TokenId> inputs;
    std::vector<TokenId> targets;
};

inline std::vector<EncodedSample> encode_samples(const std::vector<MelodySample>& samples, const Vocabulary& vocab,
                                                 const ChordTable& chords) {
    std::vector<EncodedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        EncodedSample e;
        e.condition = encode_condition(s.chord, s.part, chords).dense();
        try {
            e.inputs = encode_sentence(vocab, s.words);
        } catch (const OutOfVocabulary& err) {
            throw VocabularyError(std::string("vocabulary does not match the corpus: ") + err.what());
        }
        e.targets = sentence_targets(e.inputs);
        out.push_back(std::move(e));
    }
    return out;
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Seeded mini-batch Adam on mean_t(CE_t) + mu * mean_t(C_t), batch-averaged.
// Single-threaded; the same inputs give bit-identical parameters.
inline TrainResult train(const std::vector<MelodySample>& samples, const Vocabulary& vocab, const ChordTable& chords,
                         const TrainConfig& config, const EpochCallback& on_epoch = {}) {
    config.validate();
    if (samples.empty()) throw Error("cannot train on an empty corpus");
    const auto data = encode_samples(samples, vocab, chords);

    neural::ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.embed_dim = config.embed_dim;
    mc.hidden_dim = config.hidden_dim;
    mc.condition_dim = chords.size() + kPartCount;
    mc.feed = config.feed;

    TrainResult result{neural::init_params(mc, config.seed), {}, {}, {}};
    neural::AdamState adam(mc);
    neural::AdamConfig adam_cfg;
    adam_cfg.learning_rate = config.learning_rate;
    neural::Gradients grads(mc);
    const auto weights = neural::range_penalty_weights(vocab.pitches(), config.reg);

    Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double loss_sum = 0.0, penalty_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
            const std::size_t end = std::min(order.size(), b + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - b);
            grads.zero();
            double batch_loss = 0.0;
            for (std::size_t i = b; i < end; ++i) {
                const auto& s = data[order[i]];
                const auto l = neural::accumulate_sample_gradient(result.params, s.condition, s.inputs, s.targets, weights,
                                                                  config.reg.mu, config.dropout_p, &rng, grads, scale);
                batch_loss += l.cross_entropy;
                loss_sum += l.cross_entropy;
                penalty_sum += l.penalty;
            }
            neural::require_finite(grads);
            result.step_losses.push_back(batch_loss * scale);
            neural::adam_update(result.params, grads, adam, adam_cfg);
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.mean_loss = loss_sum / static_cast<double>(data.size());
        m.mean_penalty = penalty_sum / static_cast<double>(data.size());
        m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.metrics.push_back(m);
        if (on_epoch) on_epoch(m);

        if (config.checkpoint_dir && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
            const auto path = *config.checkpoint_dir / name;
            save_checkpoint(path, {vocab.fingerprint(), static_cast<std::uint32_t>(epoch), result.params});
            result.checkpoints.push_back(path);
        }
    }
    return result;
}

struct PlannedSegment {
    PartLabel part = PartLabel::Verse;
    ChordSeqToken chord;
    bool operator==(const PlannedSegment&) const = default;
};

struct SongPlan {
    std::vector<PlannedSegment> segments;
    bool operator==(const SongPlan&) const = default;
};

inline SongPlan plan_from_parts(const hmm::HmmParams& params, const std::vector<PartLabel>& parts) {
    const auto chords = hmm::viterbi_chords(params, parts);
    SongPlan plan;
    for (std::size_t i = 0; i < parts.size(); ++i) plan.segments.push_back({parts[i], params.tokens.at(chords[i])});
    return plan;
}

// Parts from the part chain; chords by Viterbi on those parts, or by a
// posterior draw when `posterior_chords` is set.
inline SongPlan plan_song(const hmm::HmmParams& params, std::size_t segment_count, std::uint64_t seed,
                          bool posterior_chords = false) {
    if (segment_count == 0) throw Error("a song needs at least one segment");
    const auto parts = hmm::sample_parts(params, segment_count, seed);
    if (!posterior_chords) return plan_from_parts(params, parts);
    const auto chords = hmm::sample_chords_posterior(params, parts, seed + 1);
    SongPlan plan;
    for (std::size_t i = 0; i < parts.size(); ++i) plan.segments.push_back({parts[i], params.tokens.at(chords[i])});
    return plan;
}

// Samples note words from BOS until EOS or `max_words`. BOS is never
// emitted. Words come back sorted by (onset, pitch).
inline std::vector<NoteWord> generate_segment(const ModelParams& params, const Vocabulary& vocab,
                                              const ConditionVector& condition, double temperature,
                                              std::size_t max_words, std::uint64_t seed) {
    if (params.config.vocab_size != vocab.size()) throw CheckpointError("model and vocabulary sizes differ");
    Rng rng(seed);
    const auto dense = condition.dense();
    neural::Generator gen(params, dense);
    std::vector<NoteWord> words;
    TokenId token = kBos;
    while (words.size() < max_words) {
        auto logits = gen.step(token);
        logits[kBos] = -std::numeric_limits<double>::infinity();
        token = neural::sample_token(logits, temperature, rng);
        if (token == kEos) break;
        words.push_back(vocab.word_at(token));
    }
    std::stable_sort(words.begin(), words.end(),
                     [](const NoteWord& a, const NoteWord& b) { return std::tie(a.onset, a.pitch) < std::tie(b.onset, b.pitch); });
    return words;
}

struct AssembleOptions {
    double tempo_bpm = 120.0;
    std::uint16_t ticks_per_quarter = 480;
};

// Lays segment k at tick k * (2 bars). Onset index i -> i * tpq/4 ticks,
// length of s sixteenths -> s * tpq/4 ticks, channel 0, velocity 96. Where two
// notes of the same pitch overlap, the earlier one is cut at the later onset
// (and exact duplicates collapse to the longer note) so the file's
// note-on/note-off pairing is unambiguous.
inline std::vector<smf::TimedNote> layout_notes(const std::vector<std::vector<NoteWord>>& segments, std::uint16_t tpq) {
    if (tpq % 4 != 0) throw Error("ticks per quarter must be divisible by 4");
    const std::int64_t sixteenth = tpq / 4;
    const std::int64_t window = kWindowSixteenths * sixteenth;
    std::vector<smf::TimedNote> notes;
    for (std::size_t k = 0; k < segments.size(); ++k)
        for (const auto& w : segments[k])
            notes.push_back({w.pitch, static_cast<std::int64_t>(k) * window + w.onset * sixteenth,
                             w.duration.sixteenths() * sixteenth, kGeneratedVelocity, 0});

    std::sort(notes.begin(), notes.end(), [](const smf::TimedNote& a, const smf::TimedNote& b) {
        return std::tie(a.pitch, a.onset_ticks, b.duration_ticks) < std::tie(b.pitch, b.onset_ticks, a.duration_ticks);
    });
    std::vector<smf::TimedNote> out;
    for (const auto& n : notes) {
        if (!out.empty() && out.back().pitch == n.pitch) {
            auto& prev = out.back();
            if (prev.onset_ticks == n.onset_ticks) continue;
            if (prev.end_ticks() > n.onset_ticks) prev.duration_ticks = n.onset_ticks - prev.onset_ticks;
        }
        out.push_back(n);
    }
    std::sort(out.begin(), out.end(), [](const smf::TimedNote& a, const smf::TimedNote& b) {
        return std::tie(a.onset_ticks, a.pitch) < std::tie(b.onset_ticks, b.pitch);
    });
    return out;
}

inline smf::MidiDocument assemble_song(const SongPlan& plan, const std::vector<std::vector<NoteWord>>& segments,
                                       const AssembleOptions& options = {}) {
    if (segments.size() != plan.segments.size())
        throw Error("plan has " + std::to_string(plan.segments.size()) + " segments but " + std::to_string(segments.size()) +
                    " melodies were supplied");
    const auto notes = layout_notes(segments, options.ticks_per_quarter);
    smf::ExportOptions ex;
    ex.ticks_per_quarter = options.ticks_per_quarter;
    ex.tempo_bpm = options.tempo_bpm;
    auto doc = smf::build_document(notes, ex);
    // Pad the track to the full planned length so silent trailing segments
    // still occupy their bars.
    const std::int64_t song_end = static_cast<std::int64_t>(plan.segments.size()) * kWindowSixteenths * (options.ticks_per_quarter / 4);
    std::int64_t last = 0;
    for (const auto& ev : doc.tracks[0].events) last += ev.delta;
    if (song_end > last) doc.tracks[0].events.back().delta = static_cast<std::uint32_t>(song_end - last);
    return doc;
}

struct GenerateOptions {
    std::size_t segment_count = 16;
    std::uint64_t seed = 7;
    double temperature = 1.0;
    std::size_t max_words = 32;
    bool resample_empty = false;
    int resample_attempts = 8;
    bool posterior_chords = false;
    AssembleOptions assemble;
};

struct GeneratedSong {
    SongPlan plan;
    std::vector<std::vector<NoteWord>> segments;
    smf::MidiDocument document;
};

// Plan (seeded by `seed`), then one melody per segment seeded by seed + k.
inline GeneratedSong generate_song(const ModelParams& params, const Vocabulary& vocab, const ChordTable& chords,
                                   const hmm::HmmParams& structure, const GenerateOptions& options) {
    GeneratedSong song;
    song.plan = plan_song(structure, options.segment_count, options.seed, options.posterior_chords);
    for (std::size_t k = 0; k < song.plan.segments.size(); ++k) {
        const auto& seg = song.plan.segments[k];
        const auto cond = encode_condition(seg.chord, seg.part, chords);
        std::uint64_t seed = options.seed + k;
        auto words = generate_segment(params, vocab, cond, options.temperature, options.max_words, seed);
        for (int a = 1; options.resample_empty && words.empty() && a <= options.resample_attempts; ++a)
            words = generate_segment(params, vocab, cond, options.temperature, options.max_words,
                                     seed + static_cast<std::uint64_t>(a) * 0x100000000ULL);
        song.segments.push_back(std::move(words));
    }
    song.document = assemble_song(song.plan, song.segments, options.assemble);
    return song;
}

// Fraction of notes, over all songs, whose pitch lies outside [p_min, p_max].
inline double evaluate_range_compliance(const std::vector<smf::MidiDocument>& songs, const RangeRegConfig& cfg) {
    if (songs.empty()) throw Error("no songs to evaluate");
    std::size_t total = 0, outside = 0;
    for (const auto& doc : songs) {
        for (const auto& n : smf::extract_notes(doc).notes) {
            ++total;
            if (n.pitch < cfg.p_min || n.pitch > cfg.p_max) ++outside;
        }
    }
    if (total == 0) return 0.0;
    return static_cast<double>(outside) / static_cast<double>(total);
}

}  // namespace wordmelody::pipeline

#endif  // WORDMELODY_PIPELINE_HPP
