// Writes the bundled synthetic pop corpus: annotated major-key melodies as
// Standard MIDI Files plus a JSON manifest.
//
//   make_synthetic_corpus <output-dir> [--songs N] [--seed S]
//
// Songs are written in assorted major keys with slight timing jitter; the
// manifest carries the offset that brings each one to C major. Melodies stay
// inside C4-C5 apart from two songs pitched an octave low, as happens when key
// normalization moves a song far from its original register, and occasional
// chorus climaxes above C5.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordmelody/chord.hpp"
#include "wordmelody/rng.hpp"
#include "wordmelody/smf.hpp"

namespace fs = std::filesystem;
using namespace wordmelody;

namespace {

struct Note16 {
    int onset;   // sixteenths within the window
    int length;  // sixteenths
};

// Two-bar rhythm templates.
const std::vector<std::vector<Note16>> kRhythms = {
    {{0, 4}, {4, 4}, {8, 4}, {12, 4}, {16, 8}, {24, 8}},
    {{0, 2}, {2, 2}, {4, 4}, {8, 2}, {10, 2}, {12, 4}, {16, 4}, {20, 4}, {24, 8}},
    {{2, 2}, {4, 2}, {6, 4}, {10, 2}, {12, 4}, {18, 2}, {20, 2}, {22, 4}, {26, 6}},
    {{0, 6}, {6, 2}, {8, 8}, {16, 6}, {22, 2}, {24, 8}},
    {{0, 2}, {2, 2}, {4, 2}, {6, 2}, {8, 4}, {12, 4}, {16, 2}, {18, 2}, {20, 2}, {22, 2}, {24, 4}, {28, 4}},
    {{0, 3}, {3, 3}, {6, 2}, {8, 4}, {12, 4}, {16, 3}, {19, 3}, {22, 2}, {24, 8}},
    {{4, 4}, {8, 2}, {10, 2}, {12, 4}, {20, 4}, {24, 4}, {28, 4}},
    {{0, 1}, {1, 1}, {2, 2}, {4, 2}, {6, 2}, {8, 2}, {10, 6}, {16, 1}, {17, 1}, {18, 2}, {20, 2}, {22, 2}, {24, 2}, {26, 6}},
    {{0, 8}, {8, 8}, {16, 16}},
    {{0, 2}, {2, 4}, {6, 2}, {8, 2}, {10, 4}, {14, 2}, {16, 2}, {18, 4}, {22, 2}, {24, 8}},
};

const std::vector<std::vector<const char*>> kProgressions = {
    // verse
    {"C-Am", "F-G", "Am-Em", "F-C", "Dm-G", "C-G", "Am-F", "C-Em", "Dm-Am"},
    // pre-chorus
    {"Dm-Em", "F-G", "Dm-F", "Em-F", "Am-G", "Dm-E"},
    // chorus
    {"F-G", "Em-Am", "Dm-G", "C-C", "F-C", "Am-G", "C-G", "F-Em"},
    // bridge
    {"Am-Em", "F-Em", "A#-F", "Dm-G", "G#-A#", "Am-Am"},
};

const std::vector<std::vector<PartLabel>> kForms = {
    {PartLabel::Verse, PartLabel::Verse, PartLabel::PreChorus, PartLabel::Chorus, PartLabel::Chorus, PartLabel::Verse,
     PartLabel::PreChorus, PartLabel::Chorus},
    {PartLabel::Verse, PartLabel::Verse, PartLabel::Chorus, PartLabel::Chorus, PartLabel::Bridge, PartLabel::Chorus,
     PartLabel::Chorus, PartLabel::Chorus},
    {PartLabel::Verse, PartLabel::PreChorus, PartLabel::Chorus, PartLabel::Chorus, PartLabel::Verse, PartLabel::PreChorus,
     PartLabel::Chorus, PartLabel::Chorus},
    {PartLabel::Verse, PartLabel::Verse, PartLabel::Verse, PartLabel::PreChorus, PartLabel::Chorus, PartLabel::Chorus,
     PartLabel::Bridge, PartLabel::Chorus},
};

constexpr std::array<int, 4> kPartCenter = {64, 65, 67, 66};
constexpr std::array<int, 7> kScale = {0, 2, 4, 5, 7, 9, 11};

int scale_pitch(int degree) {
    const int octave = degree >= 0 ? degree / 7 : -((-degree + 6) / 7);
    return 12 * octave + kScale[static_cast<std::size_t>(degree - 7 * octave)];
}

int nearest_degree(int pitch) {
    int best = 0, dist = 1000;
    for (int d = -30; d < 60; ++d) {
        const int diff = std::abs(scale_pitch(d) - pitch);
        if (diff < dist) {
            dist = diff;
            best = d;
        }
    }
    return best;
}

bool is_chord_tone(int pitch, const Chord& chord) {
    const int rel = ((pitch - chord.root) % 12 + 12) % 12;
    const int third = chord.quality == ChordQuality::Minor ? 3 : 4;
    const int fifth = chord.quality == ChordQuality::Augmented ? 8 : 7;
    return rel == 0 || rel == third || rel == fifth;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: make_synthetic_corpus <output-dir> [--songs N] [--seed S]\n";
        return 2;
    }
    const fs::path out_dir = argv[1];
    int song_count = 24;
    std::uint64_t seed = 20171;
    for (int i = 2; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--songs") song_count = std::stoi(argv[i + 1]);
        else if (flag == "--seed") seed = std::stoull(argv[i + 1]);
    }
    fs::create_directories(out_dir / "midi");
    Rng rng(seed);

    const std::array<int, 8> keys = {0, 2, 4, 5, 7, 9, 10, 3};  // C D E F G A Bb Eb
    nlohmann::ordered_json manifest;
    manifest["description"] = "Synthetic major-key pop melodies with per-bar chord and part annotations";
    manifest["songs"] = nlohmann::json::array();

    for (int s = 0; s < song_count; ++s) {
        const int key = keys[static_cast<std::size_t>(s) % keys.size()];
        const int transpose = key <= 6 ? -key : 12 - key;  // offset back to C
        const auto& form = kForms[rng.below(kForms.size())];
        const int shift = s % 12 == 4 ? -12 : 0;
        const std::uint16_t tpq = s % 5 == 3 ? 384 : 480;
        const int sixteenth = tpq / 4;

        std::vector<smf::TimedNote> notes;
        nlohmann::json bars = nlohmann::json::array();
        int degree = nearest_degree(kPartCenter[0] + shift);
        for (std::size_t w = 0; w < form.size(); ++w) {
            const PartLabel part = form[w];
            const auto& progs = kProgressions[static_cast<std::size_t>(part_index(part))];
            const auto token = ChordSeqToken::parse(progs[rng.below(progs.size())]);
            bars.push_back({{"chord", token.first.name()}, {"part", part_name(part)}});
            bars.push_back({{"chord", token.second.name()}, {"part", part_name(part)}});

            const int center = kPartCenter[static_cast<std::size_t>(part_index(part))] + shift;
            const int lo = nearest_degree(std::max(center - 5, 60 + shift));
            const int hi = nearest_degree(std::min(center + 5, 72 + shift));
            const auto& rhythm = kRhythms[rng.below(kRhythms.size())];
            for (std::size_t n = 0; n < rhythm.size(); ++n) {
                const auto r = rhythm[n];
                const Chord& chord = r.onset < 16 ? token.first : token.second;
                int step = static_cast<int>(rng.below(5)) - 2;
                degree = std::clamp(degree + step, lo, hi);
                int pitch = scale_pitch(degree);
                if (r.onset % 4 == 0 && !is_chord_tone(pitch, chord)) {
                    for (int d : {1, -1, 2, -2}) {
                        if (degree + d >= lo && degree + d <= hi && is_chord_tone(scale_pitch(degree + d), chord)) {
                            degree += d;
                            pitch = scale_pitch(degree);
                            break;
                        }
                    }
                }
                if (part == PartLabel::Chorus && shift == 0 && rng.bernoulli(0.04))
                    pitch = scale_pitch(hi + 1 + static_cast<int>(rng.below(2)));
                int length = r.length;
                // Occasionally hold the final note across the window boundary.
                if (n + 1 == rhythm.size() && rng.bernoulli(0.1)) length += 8;
                const std::int64_t window_start = static_cast<std::int64_t>(w) * 32 * sixteenth;
                const int jitter = static_cast<int>(rng.below(11)) - 5;
                const std::int64_t onset = std::max<std::int64_t>(0, window_start + r.onset * sixteenth + jitter * tpq / 480);
                const std::int64_t dur = length * sixteenth - static_cast<std::int64_t>(rng.below(static_cast<std::size_t>(sixteenth / 4)));
                const int velocity = 70 + static_cast<int>(rng.below(40));
                notes.push_back({pitch - transpose, onset, dur, velocity, 0});
                if (r.length >= 8 && degree - 2 >= lo && rng.bernoulli(0.15)) {
                    // Harmony a chord third below.
                    notes.push_back({scale_pitch(degree - 2) - transpose, onset, dur, velocity - 10, 0});
                }
            }
        }
        // Keep the last note inside the song.
        const std::int64_t song_end = static_cast<std::int64_t>(form.size()) * 32 * sixteenth;
        for (auto& n : notes) n.duration_ticks = std::max<std::int64_t>(1, std::min(n.end_ticks(), song_end) - n.onset_ticks);
        // Same-pitch overlaps would be ambiguous in the file; cut the earlier note.
        std::sort(notes.begin(), notes.end(), [](const auto& a, const auto& b) {
            return std::tie(a.pitch, a.onset_ticks) < std::tie(b.pitch, b.onset_ticks);
        });
        for (std::size_t i = 0; i + 1 < notes.size(); ++i)
            if (notes[i].pitch == notes[i + 1].pitch && notes[i].end_ticks() > notes[i + 1].onset_ticks)
                notes[i].duration_ticks = std::max<std::int64_t>(1, notes[i + 1].onset_ticks - notes[i].onset_ticks);
        std::erase_if(notes, [&](const auto& n) { return n.duration_ticks < 1; });
        std::sort(notes.begin(), notes.end(), [](const auto& a, const auto& b) {
            return std::tie(a.onset_ticks, a.pitch) < std::tie(b.onset_ticks, b.pitch);
        });

        smf::ExportOptions ex;
        ex.ticks_per_quarter = tpq;
        ex.tempo_bpm = 90.0 + static_cast<double>(rng.below(50));
        auto doc = smf::build_document(notes, ex);
        if (s % 4 == 2) {
            // Format 1: conductor track with tempo/time signature, notes in track 2.
            smf::MidiDocument f1;
            f1.format = 1;
            f1.ticks_per_quarter = tpq;
            smf::MidiTrack conductor;
            conductor.events.assign(doc.tracks[0].events.begin(), doc.tracks[0].events.begin() + 2);
            conductor.events.push_back(smf::end_of_track_event());
            smf::MidiTrack melody;
            melody.events.assign(doc.tracks[0].events.begin() + 2, doc.tracks[0].events.end());
            f1.tracks = {conductor, melody};
            doc = std::move(f1);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "song_%02d", s + 1);
        smf::write_file(out_dir / "midi" / (std::string(name) + ".mid"), smf::write_midi(doc));
        manifest["songs"].push_back({{"name", name},
                                     {"midi", "midi/" + std::string(name) + ".mid"},
                                     {"transpose_offset", transpose},
                                     {"mode", "major"},
                                     {"bar_count", form.size() * 2},
                                     {"bars", bars}});
    }
    std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << "\n";
    std::cerr << "wrote " << song_count << " songs to " << out_dir << "\n";
    return 0;
}
