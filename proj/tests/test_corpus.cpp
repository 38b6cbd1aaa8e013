#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "wordmelody/corpus.hpp"

using namespace wordmelody;
using namespace wordmelody::corpus;

namespace {

const std::filesystem::path kCorpus = WORDMELODY_CORPUS_DIR;

ManifestEntry entry_with_bars(int bars, int offset = 0) {
    ManifestEntry e;
    e.name = "fixture";
    e.transpose_offset = offset;
    e.declared_bars = bars;
    const char* chords[] = {"C", "Am", "F", "G", "Dm", "Em", "C", "G"};
    for (int b = 0; b < bars; ++b) e.bars.push_back({Chord::parse(chords[b % 8]), b < 4 ? PartLabel::Verse : PartLabel::Chorus});
    return e;
}

// One quarter note at the start of every bar.
smf::MidiDocument eight_bar_document() {
    std::vector<TimedNote> notes;
    for (int b = 0; b < 8; ++b) notes.push_back({60 + b, b * 1920, 480, 90, 0});
    return smf::build_document(notes);
}

MelodySample sample_with(std::size_t n) {
    MelodySample s;
    for (std::size_t i = 0; i < n; ++i) s.words.push_back({60, static_cast<int>(i), Duration::from_sixteenths(1)});
    return s;
}

}  // namespace

TEST(Quantize, DurationExamples) {
    EXPECT_EQ(quantize_duration(0.23), Duration::from_sixteenths(4));
    EXPECT_EQ(quantize_duration(0.6), Duration::from_fraction(5, 8));
    EXPECT_EQ(quantize_duration(0.01), Duration::from_sixteenths(1));
    EXPECT_EQ(quantize_duration(3.0), Duration::from_sixteenths(16));
    EXPECT_THROW(quantize_duration(0.0), Error);
    EXPECT_THROW(quantize_duration(-0.1), Error);
}

TEST(Quantize, DurationTiesRoundDown) {
    // 1.5/16 sits between 1/16 and 2/16; 9/16 between 4/8 and 5/8.
    EXPECT_EQ(quantize_duration(1.5 / 16), Duration::from_sixteenths(1));
    EXPECT_EQ(quantize_duration(9.0 / 16), Duration::from_sixteenths(8));
    EXPECT_EQ(quantize_duration_ticks(180, 480), Duration::from_sixteenths(1));
    EXPECT_EQ(quantize_duration_ticks(1080, 480), Duration::from_sixteenths(8));
}

TEST(Quantize, TickAndFractionPathsAgree) {
    for (int tpq : {96, 384, 480, 960})
        for (int ticks = 1; ticks <= 5 * tpq; ticks += 7)
            EXPECT_EQ(quantize_duration_ticks(ticks, tpq), quantize_duration(ticks / (4.0 * tpq))) << ticks << "/" << tpq;
}

TEST(Quantize, DurationIsIdempotent) {
    for (int i = 1; i <= 2000; ++i) {
        const double raw = i / 1000.0;
        const Duration q = quantize_duration(raw);
        EXPECT_EQ(quantize_duration(q.whole_notes()), q) << raw;
        EXPECT_TRUE(Duration::is_valid_sixteenths(q.sixteenths()));
    }
}

TEST(Quantize, OnsetExamples) {
    EXPECT_EQ(quantize_onset(0, 480), 0);
    EXPECT_EQ(quantize_onset(480, 480), 4);
    EXPECT_EQ(quantize_onset(3600, 480), 30);
    EXPECT_EQ(quantize_onset(60, 480), 0);   // half a sixteenth: tie goes down
    EXPECT_EQ(quantize_onset(61, 480), 1);
    EXPECT_EQ(quantize_onset(3839, 480), 31);  // clamps inside the window
    EXPECT_EQ(quantize_onset(3840 + 480, 480, 3840), 4);
}

TEST(Ingest, TransposeOffset) {
    const std::vector<TimedNote> notes = {{62, 0, 480, 90, 0}};
    const auto doc = smf::build_document(notes);
    EXPECT_EQ(ingest_document(doc, entry_with_bars(2, 0)).notes[0].pitch, 62);
    EXPECT_EQ(ingest_document(doc, entry_with_bars(2, -2)).notes[0].pitch, 60);
}

TEST(Ingest, EightBarFixtureGivesFourSamples) {
    const auto song = ingest_document(eight_bar_document(), entry_with_bars(8));
    EXPECT_EQ(song.bars, 8);
    const auto seg = segment_samples(song);
    ASSERT_EQ(seg.samples.size(), 4u);
    EXPECT_TRUE(seg.warnings.empty());
    EXPECT_EQ(seg.samples[0].chord.name(), "C-Am");
    EXPECT_EQ(seg.samples[0].part, PartLabel::Verse);
    EXPECT_EQ(seg.samples[2].part, PartLabel::Chorus);
    ASSERT_EQ(seg.samples[1].words.size(), 2u);
    EXPECT_EQ(seg.samples[1].words[1], (NoteWord{63, 16, Duration::from_sixteenths(4)}));
}

TEST(Ingest, RejectsInvalidSongs) {
    const auto doc = eight_bar_document();
    auto minor = entry_with_bars(8);
    minor.mode = "minor";
    EXPECT_THROW(ingest_document(doc, minor), IngestError);

    auto mismatch = entry_with_bars(8);
    mismatch.declared_bars = 9;
    EXPECT_THROW(ingest_document(doc, mismatch), IngestError);

    // Notes run to bar 8 but only 6 bars are annotated.
    EXPECT_THROW(ingest_document(doc, entry_with_bars(6)), IngestError);

    try {
        ingest_document(doc, minor);
    } catch (const IngestError& e) {
        EXPECT_NE(std::string(e.what()).find("fixture"), std::string::npos);
    }
}

TEST(Segment, BoundaryCrossingNoteIsTruncated) {
    // Half note on beat 4 of bar 2 (tick 3360) runs a quarter past the window.
    const std::vector<TimedNote> notes = {{67, 3360, 960, 90, 0}};
    const auto song = ingest_document(smf::build_document(notes), entry_with_bars(4));
    const auto seg = segment_samples(song);
    ASSERT_EQ(seg.samples.size(), 1u);
    ASSERT_EQ(seg.samples[0].words.size(), 1u);
    EXPECT_EQ(seg.samples[0].words[0].onset, 28);
    EXPECT_EQ(seg.samples[0].words[0].duration, Duration::from_sixteenths(4));
}

TEST(Segment, EmptyWindowsAreDroppedAndMixedPartsWarn) {
    const std::vector<TimedNote> notes = {{60, 0, 480, 90, 0}, {60, 4 * 1920, 480, 90, 0}};
    auto e = entry_with_bars(6);
    e.bars[5].part = PartLabel::Bridge;
    const auto seg = segment_samples(ingest_document(smf::build_document(notes), e));
    ASSERT_EQ(seg.samples.size(), 2u);
    EXPECT_EQ(seg.samples[1].window, 2);
    EXPECT_EQ(seg.samples[1].part, PartLabel::Chorus);
    EXPECT_EQ(seg.warnings.size(), 1u);
}

TEST(Segment, TrailingOddBarWarns) {
    const std::vector<TimedNote> notes = {{60, 0, 480, 90, 0}};
    const auto seg = segment_samples(ingest_document(smf::build_document(notes), entry_with_bars(3)));
    EXPECT_EQ(seg.samples.size(), 1u);
    EXPECT_EQ(seg.warnings.size(), 1u);
}

TEST(Stats, SingleSample) {
    const auto st = compute_stats({sample_with(3)});
    EXPECT_EQ(st.avg_notes, 3.0);
    EXPECT_EQ(st.max_notes, 3u);
    EXPECT_EQ(st.min_notes, 3u);
    EXPECT_EQ(st.stddev_notes, 0.0);
}

TEST(Stats, TwoSamples) {
    const auto st = compute_stats({sample_with(2), sample_with(4)});
    EXPECT_DOUBLE_EQ(st.avg_notes, 3.0);
    EXPECT_DOUBLE_EQ(st.stddev_notes, 1.0);
    EXPECT_THROW(compute_stats({}), Error);
}

TEST(Stats, MedianIsLowerMedian) {
    MelodySample s;
    for (int p : {60, 62, 64, 70}) s.words.push_back({p, 0, Duration::from_sixteenths(p == 70 ? 16 : 2)});
    const auto st = compute_stats({s});
    EXPECT_EQ(st.median_pitch, 62);
    EXPECT_EQ(st.median_length, Duration::from_sixteenths(2));
    EXPECT_EQ(st.min_pitch, 60);
    EXPECT_EQ(st.max_length, Duration::from_sixteenths(16));
}

TEST(Stats, ReportFieldNames) {
    const auto j = stats_report(compute_stats({sample_with(2), sample_with(4)}));
    const std::vector<std::string> expected = {"# songs",   "# samples", "avg # notes",  "max # notes", "min # notes", "std dev",
                                               "min pitch", "max pitch", "median pitch", "min length",  "max length",  "median length"};
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, expected);
    EXPECT_EQ(j["min length"], "1/16");
}

TEST(CorpusProperties, SegmentationIsAPartition) {
    const auto manifest = load_manifest(kCorpus / "manifest.json");
    for (std::size_t i = 0; i < manifest.songs.size(); ++i) {
        const auto song = ingest_song(manifest.songs[i].midi_path, manifest.songs[i]);
        const auto seg = segment_samples(song, static_cast<int>(i));
        const std::int64_t window = 2 * song.bar_ticks();
        std::map<std::int64_t, std::size_t> expected;
        for (const auto& n : song.notes)
            if (n.onset_ticks / window < song.bars / 2) ++expected[n.onset_ticks / window];
        std::map<std::int64_t, std::size_t> got;
        for (const auto& s : seg.samples) {
            got[s.window] += s.words.size();
            for (const auto& w : s.words) {
                EXPECT_GE(w.onset, 0);
                EXPECT_LE(w.onset, 31);
            }
        }
        EXPECT_EQ(got, expected) << manifest.songs[i].name;
    }
}

TEST(CorpusProperties, TranspositionEquivariance) {
    const auto manifest = load_manifest(kCorpus / "manifest.json");
    for (int k : {-5, 3, 12}) {
        for (const auto& e : manifest.songs) {
            auto shifted = e;
            shifted.transpose_offset = e.transpose_offset + k;
            const auto a = segment_samples(ingest_song(e.midi_path, e)).samples;
            const auto b = segment_samples(ingest_song(e.midi_path, shifted)).samples;
            ASSERT_EQ(a.size(), b.size());
            for (std::size_t s = 0; s < a.size(); ++s) {
                ASSERT_EQ(a[s].words.size(), b[s].words.size());
                for (std::size_t w = 0; w < a[s].words.size(); ++w) {
                    EXPECT_EQ(b[s].words[w].pitch - a[s].words[w].pitch, k);
                    EXPECT_EQ(b[s].words[w].onset, a[s].words[w].onset);
                    EXPECT_EQ(b[s].words[w].duration, a[s].words[w].duration);
                }
            }
        }
    }
}

TEST(CorpusStore, SamplesSurviveJson) {
    const auto c = ingest_corpus(load_manifest(kCorpus / "manifest.json"));
    const auto back = samples_from_json(samples_to_json(c));
    EXPECT_EQ(back.samples, c.samples);
    EXPECT_EQ(back.song_names, c.song_names);
    EXPECT_EQ(corpus_fingerprint(back.samples), corpus_fingerprint(c.samples));
}

TEST(Manifest, MissingFileIsAnIngestError) {
    EXPECT_THROW(load_manifest(kCorpus / "no_such_manifest.json"), IngestError);
}
