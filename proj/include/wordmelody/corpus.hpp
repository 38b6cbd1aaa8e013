#ifndef WORDMELODY_CORPUS_HPP
#define WORDMELODY_CORPUS_HPP

// Corpus ingestion: annotated MIDI songs -> C-major-normalized scores ->
// non-overlapping 2-bar conditioned melody samples. 4/4 throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordmelody/chord.hpp"
#include "wordmelody/error.hpp"
#include "wordmelody/note_word.hpp"
#include "wordmelody/smf.hpp"

namespace wordmelody::corpus {

using smf::TimedNote;

struct BarAnnotation {
    Chord chord;
    PartLabel part = PartLabel::Verse;
    bool operator==(const BarAnnotation&) const = default;
};

struct ManifestEntry {
    std::string name;
    std::filesystem::path midi_path;
    int transpose_offset = 0;
    std::string mode = "major";
    std::optional<int> declared_bars;
    std::optional<std::set<int>> channels;
    std::vector<BarAnnotation> bars;
};

struct Manifest {
    std::vector<ManifestEntry> songs;
};

struct SongScore {
    std::string name;
    std::vector<TimedNote> notes;
    int ticks_per_quarter = 480;
    int bars = 0;
    std::vector<BarAnnotation> annotations;
    int transpose_offset = 0;
    std::vector<std::string> warnings;

    std::int64_t bar_ticks() const { return 4LL * ticks_per_quarter; }
};

struct MelodySample {
    ChordSeqToken chord;
    PartLabel part = PartLabel::Verse;
    std::vector<NoteWord> words;
    // Provenance: index of the song in manifest order and of the 2-bar window
    // within the song. Used to recover segment order for structure models.
    int song = 0;
    int window = 0;

    bool operator==(const MelodySample&) const = default;
};

struct Segmentation {
    std::vector<MelodySample> samples;
    std::vector<std::string> warnings;
};

struct CorpusStats {
    std::size_t song_count = 0;
    std::size_t sample_count = 0;
    double avg_notes = 0.0;
    std::size_t max_notes = 0;
    std::size_t min_notes = 0;
    double stddev_notes = 0.0;
    int min_pitch = 0;
    int max_pitch = 0;
    int median_pitch = 0;
    Duration min_length;
    Duration max_length;
    Duration median_length;
};

namespace detail {

// Nearest integer to num/den (both non-negative, den > 0), ties toward the
// smaller value.
inline std::int64_t round_ties_down(std::int64_t num, std::int64_t den) {
    const std::int64_t q = num / den;
    const std::int64_t r = num % den;
    return 2 * r > den ? q + 1 : q;
}

inline Duration quantize_from_sixteenth_units(std::int64_t num, std::int64_t den) {
    // num/den is the length in sixteenths; below 8 sixteenths (a half note)
    // snap to sixteenths, otherwise to eighths.
    if (num < 8 * den) {
        const std::int64_t k = std::max<std::int64_t>(1, round_ties_down(num, den));
        return Duration::from_sixteenths(static_cast<int>(std::min<std::int64_t>(k, 8)));
    }
    const std::int64_t eighths = std::clamp<std::int64_t>(round_ties_down(num, 2 * den), 4, 8);
    return Duration::from_sixteenths(static_cast<int>(2 * eighths));
}

}  // namespace detail

// `raw` is a length in whole notes. Below 1/2 the result is the nearest
// sixteenth (at least 1/16); from 1/2 up it is the nearest eighth, capped at
// a whole note. Exact halves round down.
inline Duration quantize_duration(double raw) {
    if (!(raw > 0.0) || !std::isfinite(raw)) throw Error("duration must be positive, got " + std::to_string(raw));
    if (raw < 0.5) {
        const double k = std::ceil(raw * 16.0 - 0.5);
        return Duration::from_sixteenths(static_cast<int>(std::clamp(k, 1.0, 8.0)));
    }
    const double k = std::ceil(raw * 8.0 - 0.5);
    return Duration::from_sixteenths(2 * static_cast<int>(std::clamp(k, 4.0, 8.0)));
}

// Same rule evaluated exactly on a tick count.
inline Duration quantize_duration_ticks(std::int64_t ticks, int ticks_per_quarter) {
    if (ticks <= 0) throw Error("duration must be positive, got " + std::to_string(ticks) + " ticks");
    if (ticks_per_quarter <= 0) throw Error("ticks per quarter must be positive");
    return detail::quantize_from_sixteenth_units(4 * ticks, ticks_per_quarter);
}

// Sixteenth index of `onset_ticks` relative to the window starting at
// `window_start`; nearest grid point, ties down, clamped to [0, 31].
inline int quantize_onset(std::int64_t onset_ticks, int ticks_per_quarter, std::int64_t window_start = 0) {
    const std::int64_t rel = std::max<std::int64_t>(0, onset_ticks - window_start);
    const std::int64_t idx = detail::round_ties_down(4 * rel, ticks_per_quarter);
    return static_cast<int>(std::min<std::int64_t>(idx, kWindowSixteenths - 1));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("manifest " + path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    Manifest m;
    try {
        for (const auto& s : j.at("songs")) {
            ManifestEntry e;
            e.name = s.at("name").get<std::string>();
            e.midi_path = base / s.at("midi").get<std::string>();
            e.transpose_offset = s.value("transpose_offset", 0);
            e.mode = s.value("mode", std::string("major"));
            if (s.contains("bar_count")) e.declared_bars = s.at("bar_count").get<int>();
            if (s.contains("channels")) e.channels = s.at("channels").get<std::set<int>>();
            for (const auto& b : s.at("bars"))
                e.bars.push_back({Chord::parse(b.at("chord").get<std::string>()), parse_part(b.at("part").get<std::string>())});
            m.songs.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("manifest " + path.string() + ": " + e.what());
    } catch (const IngestError&) {
        throw;
    } catch (const Error& e) {
        throw IngestError("manifest " + path.string() + ": " + e.what());
    }
    return m;
}

// Builds a normalized score from an already-parsed document.
inline SongScore ingest_document(const smf::MidiDocument& doc, const ManifestEntry& entry) {
    const auto fail = [&](const std::string& msg) { return IngestError("song '" + entry.name + "': " + msg); };
    if (entry.mode != "major") throw fail("only major-scale songs are accepted (mode '" + entry.mode + "')");
    if (entry.bars.empty()) throw fail("no bar annotations");
    if (entry.declared_bars && static_cast<std::size_t>(*entry.declared_bars) != entry.bars.size())
        throw fail("annotation/bar-count mismatch: " + std::to_string(entry.bars.size()) + " annotations for " +
                   std::to_string(*entry.declared_bars) + " bars");

    SongScore song;
    song.name = entry.name;
    song.ticks_per_quarter = doc.ticks_per_quarter;
    song.transpose_offset = entry.transpose_offset;
    song.annotations = entry.bars;
    song.bars = static_cast<int>(entry.bars.size());

    auto extraction = smf::extract_notes(doc, entry.channels);
    for (auto& w : extraction.warnings) song.warnings.push_back(entry.name + ": " + w);
    const std::int64_t span = song.bars * song.bar_ticks();
    for (auto n : extraction.notes) {
        n.pitch += entry.transpose_offset;
        if (n.pitch < 0 || n.pitch > 127) throw fail("transposed pitch out of MIDI range");
        if (n.end_ticks() > span)
            throw fail("note at tick " + std::to_string(n.onset_ticks) + " extends past the " + std::to_string(song.bars) +
                       " annotated bars");
        song.notes.push_back(n);
    }
    return song;
}

inline SongScore ingest_song(const std::filesystem::path& midi_path, const ManifestEntry& entry) {
    smf::MidiDocument doc;
    try {
        doc = smf::parse_midi(smf::read_file(midi_path));
    } catch (const Error& e) {
        throw IngestError("song '" + entry.name + "': " + e.what());
    }
    return ingest_document(doc, entry);
}

// Cuts a song into disjoint 2-bar windows from bar 0. A trailing odd bar is
// ignored. Notes belong to the window holding their onset and are truncated
// at the window's end before quantization.
inline Segmentation segment_samples(const SongScore& song, int song_index = 0) {
    Segmentation out;
    const std::int64_t window_ticks = kWindowBars * song.bar_ticks();
    const int windows = song.bars / kWindowBars;
    if (song.bars % kWindowBars != 0)
        out.warnings.push_back(song.name + ": trailing bar " + std::to_string(song.bars) + " does not fill a 2-bar window");

    std::vector<std::vector<NoteWord>> words(static_cast<std::size_t>(windows));
    for (const auto& n : song.notes) {
        const std::int64_t w = n.onset_ticks / window_ticks;
        if (w >= windows) continue;
        const std::int64_t start = w * window_ticks;
        const std::int64_t end = std::min(n.end_ticks(), start + window_ticks);
        NoteWord word;
        word.pitch = n.pitch;
        word.onset = quantize_onset(n.onset_ticks, song.ticks_per_quarter, start);
        word.duration = quantize_duration_ticks(end - n.onset_ticks, song.ticks_per_quarter);
        words[static_cast<std::size_t>(w)].push_back(word);
    }

    for (int w = 0; w < windows; ++w) {
        auto& ws = words[static_cast<std::size_t>(w)];
        if (ws.empty()) continue;
        std::stable_sort(ws.begin(), ws.end(), [](const NoteWord& a, const NoteWord& b) {
            return std::tie(a.onset, a.pitch) < std::tie(b.onset, b.pitch);
        });
        const auto& first = song.annotations[static_cast<std::size_t>(2 * w)];
        const auto& second = song.annotations[static_cast<std::size_t>(2 * w + 1)];
        if (first.part != second.part)
            out.warnings.push_back(song.name + ": window " + std::to_string(w) + " spans parts " + part_name(first.part) +
                                   " and " + part_name(second.part) + "; using " + part_name(first.part));
        MelodySample s;
        s.chord = {first.chord, second.chord};
        s.part = first.part;
        s.words = std::move(ws);
        s.song = song_index;
        s.window = w;
        out.samples.push_back(std::move(s));
    }
    return out;
}

struct Corpus {
    std::vector<std::string> song_names;
    std::vector<MelodySample> samples;
    std::vector<std::string> warnings;
};

// Ingests every manifest song in order and concatenates their samples.
inline Corpus ingest_corpus(const Manifest& manifest) {
    Corpus c;
    for (std::size_t i = 0; i < manifest.songs.size(); ++i) {
        const auto& entry = manifest.songs[i];
        SongScore song = ingest_song(entry.midi_path, entry);
        auto seg = segment_samples(song, static_cast<int>(i));
        c.song_names.push_back(entry.name);
        c.warnings.insert(c.warnings.end(), song.warnings.begin(), song.warnings.end());
        c.warnings.insert(c.warnings.end(), seg.warnings.begin(), seg.warnings.end());
        for (auto& s : seg.samples) c.samples.push_back(std::move(s));
    }
    return c;
}

inline CorpusStats compute_stats(const std::vector<MelodySample>& samples) {
    if (samples.empty()) throw Error("cannot compute statistics of an empty sample list");
    CorpusStats st;
    std::set<int> songs;
    std::vector<int> pitches;
    std::vector<Duration> lengths;
    double sum = 0.0;
    double sum_sq = 0.0;
    st.min_notes = samples.front().words.size();
    for (const auto& s : samples) {
        songs.insert(s.song);
        const std::size_t n = s.words.size();
        sum += static_cast<double>(n);
        sum_sq += static_cast<double>(n) * static_cast<double>(n);
        st.max_notes = std::max(st.max_notes, n);
        st.min_notes = std::min(st.min_notes, n);
        for (const auto& w : s.words) {
            pitches.push_back(w.pitch);
            lengths.push_back(w.duration);
        }
    }
    const double count = static_cast<double>(samples.size());
    st.song_count = songs.size();
    st.sample_count = samples.size();
    st.avg_notes = sum / count;
    st.stddev_notes = std::sqrt(std::max(0.0, sum_sq / count - st.avg_notes * st.avg_notes));
    if (pitches.empty()) throw Error("samples contain no notes");
    std::sort(pitches.begin(), pitches.end());
    std::sort(lengths.begin(), lengths.end());
    const auto lower_median = [](std::size_t n) { return (n - 1) / 2; };
    st.min_pitch = pitches.front();
    st.max_pitch = pitches.back();
    st.median_pitch = pitches[lower_median(pitches.size())];
    st.min_length = lengths.front();
    st.max_length = lengths.back();
    st.median_length = lengths[lower_median(lengths.size())];
    return st;
}

// Report keyed by the column names of the reference corpus table.
inline nlohmann::ordered_json stats_report(const CorpusStats& st) {
    nlohmann::ordered_json j;
    j["# songs"] = st.song_count;
    j["# samples"] = st.sample_count;
    j["avg # notes"] = std::round(st.avg_notes * 100.0) / 100.0;
    j["max # notes"] = st.max_notes;
    j["min # notes"] = st.min_notes;
    j["std dev"] = std::round(st.stddev_notes * 100.0) / 100.0;
    j["min pitch"] = st.min_pitch;
    j["max pitch"] = st.max_pitch;
    j["median pitch"] = st.median_pitch;
    j["min length"] = st.min_length.to_string();
    j["max length"] = st.max_length.to_string();
    j["median length"] = st.median_length.to_string();
    return j;
}

// FNV-1a over sample conditions and words, in order.
inline std::uint64_t corpus_fingerprint(const std::vector<MelodySample>& samples) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::int64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& s : samples) {
        mix(s.song);
        mix(s.window);
        mix(s.chord.first.root * 3 + static_cast<int>(s.chord.first.quality));
        mix(s.chord.second.root * 3 + static_cast<int>(s.chord.second.quality));
        mix(part_index(s.part));
        mix(static_cast<std::int64_t>(s.words.size()));
        for (const auto& w : s.words) {
            mix(w.pitch);
            mix(w.onset);
            mix(w.duration.sixteenths());
        }
    }
    return h;
}

// Sample store: the tokenized corpus as written by `ingest`.
inline nlohmann::json samples_to_json(const Corpus& c) {
    nlohmann::json j;
    j["songs"] = c.song_names;
    auto& arr = j["samples"] = nlohmann::json::array();
    for (const auto& s : c.samples) {
        nlohmann::json words = nlohmann::json::array();
        for (const auto& w : s.words)
            words.push_back({w.pitch, w.onset, w.duration.numerator(), w.duration.denominator()});
        arr.push_back({{"song", s.song}, {"window", s.window}, {"chord", s.chord.name()}, {"part", part_name(s.part)},
                       {"words", std::move(words)}});
    }
    return j;
}

inline Corpus samples_from_json(const nlohmann::json& j) {
    Corpus c;
    try {
        c.song_names = j.at("songs").get<std::vector<std::string>>();
        for (const auto& s : j.at("samples")) {
            MelodySample m;
            m.song = s.at("song").get<int>();
            m.window = s.at("window").get<int>();
            m.chord = ChordSeqToken::parse(s.at("chord").get<std::string>());
            m.part = parse_part(s.at("part").get<std::string>());
            for (const auto& w : s.at("words")) {
                NoteWord word;
                word.pitch = w.at(0).get<int>();
                word.onset = w.at(1).get<int>();
                word.duration = Duration::from_fraction(w.at(2).get<int>(), w.at(3).get<int>());
                if (word.pitch < 0 || word.pitch > 127 || word.onset < 0 || word.onset >= kWindowSixteenths)
                    throw Error("note word out of range");
                m.words.push_back(word);
            }
            c.samples.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed sample store: ") + e.what());
    }
    return c;
}

}  // namespace wordmelody::corpus

#endif  // WORDMELODY_CORPUS_HPP
