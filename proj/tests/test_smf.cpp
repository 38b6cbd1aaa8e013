#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "wordmelody/check.hpp"
#include "wordmelody/smf.hpp"

using namespace wordmelody;
using smf::Bytes;

namespace {

const std::filesystem::path kFixtures = WORDMELODY_FIXTURE_DIR;
const std::filesystem::path kCorpus = WORDMELODY_CORPUS_DIR;

Bytes fixture(const char* name) { return smf::read_file(kFixtures / name); }

// Header + one track chunk wrapping `body`.
Bytes single_track(const Bytes& body, std::uint16_t format = 0) {
    Bytes out = {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, static_cast<std::uint8_t>(format), 0, 1, 0x01, 0xE0, 'M', 'T', 'r', 'k'};
    const auto n = static_cast<std::uint32_t>(body.size());
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(n >> s));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::size_t parse_error_offset(const Bytes& bytes) {
    try {
        smf::parse_midi(bytes);
    } catch (const ParseError& e) {
        return e.offset();
    }
    ADD_FAILURE() << "expected a parse error";
    return 0;
}

}  // namespace

TEST(SmfParse, MinimalFileHasOneEmptyTrack) {
    const auto doc = smf::parse_midi(fixture("empty.mid"));
    ASSERT_EQ(doc.tracks.size(), 1u);
    EXPECT_EQ(doc.format, 0);
    EXPECT_EQ(doc.ticks_per_quarter, 480);
    EXPECT_TRUE(smf::extract_notes(doc).notes.empty());
}

TEST(SmfParse, SimultaneousNoteOnsAtTickZero) {
    const auto notes = smf::extract_notes(smf::parse_midi(fixture("chord_running_status.mid"))).notes;
    ASSERT_EQ(notes.size(), 2u);
    EXPECT_EQ(notes[0].pitch, 60);
    EXPECT_EQ(notes[1].pitch, 64);
    for (const auto& n : notes) {
        EXPECT_EQ(n.onset_ticks, 0);
        EXPECT_EQ(n.duration_ticks, 480);
    }
}

TEST(SmfParse, OverlappingSamePitchPairsFirstOnFirstOff) {
    const auto notes = smf::extract_notes(smf::parse_midi(fixture("overlap_same_pitch.mid"))).notes;
    ASSERT_EQ(notes.size(), 2u);
    EXPECT_EQ(notes[0].onset_ticks, 0);
    EXPECT_EQ(notes[0].duration_ticks, 480);
    EXPECT_EQ(notes[0].velocity, 100);
    EXPECT_EQ(notes[1].onset_ticks, 240);
    EXPECT_EQ(notes[1].duration_ticks, 480);
    EXPECT_EQ(notes[1].velocity, 80);
}

TEST(SmfParse, Format1KeepsOpaqueEvents) {
    const auto doc = smf::parse_midi(fixture("format1_sysex_meta.mid"));
    EXPECT_EQ(doc.format, 1);
    ASSERT_EQ(doc.tracks.size(), 2u);
    EXPECT_TRUE(doc.tracks[0].events[1].is_sysex());
    EXPECT_EQ(doc.tracks[0].events[2].meta_type, 0x7F);
    const auto notes = smf::extract_notes(doc).notes;
    ASSERT_EQ(notes.size(), 1u);
    EXPECT_EQ(notes[0].pitch, 72);
    EXPECT_EQ(notes[0].channel, 1);
    EXPECT_EQ(notes[0].duration_ticks, 192);
    EXPECT_TRUE(smf::extract_notes(doc, std::set<int>{0}).notes.empty());
}

TEST(SmfParse, QuarterNoteDefinition) {
    const auto doc = smf::parse_midi(single_track({0x00, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0, 0x00, 0xFF, 0x2F, 0x00}));
    const auto notes = smf::extract_notes(doc).notes;
    ASSERT_EQ(notes.size(), 1u);
    EXPECT_EQ(notes[0], (smf::TimedNote{60, 0, 480, 100, 0}));
}

TEST(SmfParse, ErrorsCarryByteOffsets) {
    Bytes bad_tag = fixture("empty.mid");
    bad_tag[3] = 'x';
    EXPECT_EQ(parse_error_offset(bad_tag), 0u);

    Bytes format2 = fixture("empty.mid");
    format2[9] = 2;
    EXPECT_EQ(parse_error_offset(format2), 8u);

    Bytes smpte = fixture("empty.mid");
    smpte[12] = 0xE7;
    EXPECT_EQ(parse_error_offset(smpte), 12u);

    // Track chunk claims 4 bytes, only 3 follow.
    Bytes truncated = fixture("empty.mid");
    truncated.pop_back();
    EXPECT_EQ(parse_error_offset(truncated), 25u);

    // Five-byte delta time.
    EXPECT_EQ(parse_error_offset(single_track({0xFF, 0xFF, 0xFF, 0xFF, 0x7F, 0xFF, 0x2F, 0x00})), 22u);

    // Data byte with no running status in effect.
    EXPECT_EQ(parse_error_offset(single_track({0x00, 0x3C, 0x40, 0x00, 0xFF, 0x2F, 0x00})), 23u);

    // Running status does not survive a meta event.
    EXPECT_EQ(parse_error_offset(single_track({0x00, 0x90, 0x3C, 0x40, 0x00, 0xFF, 0x01, 0x00, 0x00, 0x3C, 0x00, 0x00, 0xFF, 0x2F, 0x00})),
              31u);
}

TEST(SmfParse, UnmatchedNoteOnClosesAtFinalTick) {
    const auto doc = smf::parse_midi(single_track({0x00, 0x90, 62, 90, 0x83, 0x60, 0xFF, 0x2F, 0x00}));
    const auto ex = smf::extract_notes(doc);
    ASSERT_EQ(ex.notes.size(), 1u);
    EXPECT_EQ(ex.notes[0].duration_ticks, 480);
    ASSERT_EQ(ex.warnings.size(), 1u);
}

TEST(SmfWrite, EmptyDocumentIs26Bytes) {
    smf::MidiDocument doc;
    doc.tracks.push_back({{smf::end_of_track_event()}});
    const auto bytes = smf::write_midi(doc);
    EXPECT_EQ(bytes.size(), 14u + 8u + 4u);
    EXPECT_EQ(bytes, fixture("empty.mid"));
}

TEST(SmfWrite, DivisionIsBigEndian) {
    smf::MidiDocument doc;
    doc.ticks_per_quarter = 480;
    doc.tracks.push_back({{smf::end_of_track_event()}});
    const auto bytes = smf::write_midi(doc);
    EXPECT_EQ(bytes[12], 0x01);
    EXPECT_EQ(bytes[13], 0xE0);
}

TEST(SmfWrite, VlqEncoding) {
    const std::vector<std::pair<std::uint32_t, Bytes>> cases = {
        {0, {0x00}}, {0x7F, {0x7F}}, {0x80, {0x81, 0x00}}, {480, {0x83, 0x60}}, {0x3FFF, {0xFF, 0x7F}},
        {0x4000, {0x81, 0x80, 0x00}}, {0x0FFFFFFF, {0xFF, 0xFF, 0xFF, 0x7F}}};
    for (const auto& [value, expected] : cases) {
        Bytes out;
        smf::write_vlq(out, value);
        EXPECT_EQ(out, expected) << value;
    }
}

TEST(SmfWrite, DeltaOverflowIsRejected) {
    Bytes out;
    EXPECT_THROW(smf::write_vlq(out, 0x10000000), SerializationError);
    const std::vector<smf::TimedNote> notes = {{60, 0, 0x10000000, 90, 0}};
    EXPECT_THROW(smf::write_midi(smf::build_document(notes)), SerializationError);
}

TEST(SmfWrite, NoteOffsPrecedeNoteOnsAtTheSameTick) {
    const std::vector<smf::TimedNote> notes = {{60, 0, 480, 90, 0}, {60, 480, 480, 90, 0}};
    const auto back = smf::extract_notes(smf::parse_midi(smf::write_midi(smf::build_document(notes)))).notes;
    EXPECT_EQ(back, notes);
}

TEST(SmfRoundTrip, FixtureFilesAreByteIdentical) {
    for (const auto& entry : std::filesystem::directory_iterator(kFixtures)) {
        const auto bytes = smf::read_file(entry.path());
        EXPECT_EQ(smf::write_midi(smf::parse_midi(bytes)), bytes) << entry.path();
    }
    for (const auto& bytes : check::builtin_midi_fixtures()) EXPECT_EQ(smf::write_midi(smf::parse_midi(bytes)), bytes);
}

TEST(SmfRoundTrip, CorpusFilesAreByteIdentical) {
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(kCorpus / "midi")) {
        const auto bytes = smf::read_file(entry.path());
        EXPECT_EQ(smf::write_midi(smf::parse_midi(bytes)), bytes) << entry.path();
        ++count;
    }
    EXPECT_GT(count, 0);
}

TEST(SmfRoundTrip, DocumentIdentity) {
    for (const char* name : {"empty.mid", "chord_running_status.mid", "format1_sysex_meta.mid", "overlap_same_pitch.mid"}) {
        const auto doc = smf::parse_midi(fixture(name));
        EXPECT_EQ(smf::parse_midi(smf::write_midi(doc)), doc) << name;
    }
}

TEST(SmfRoundTrip, RandomScoresRoundTripAtNoteLevel) {
    Rng rng(31337);
    for (int i = 0; i < 200; ++i) {
        const auto notes = check::random_score(rng, rng.below(30));
        smf::ExportOptions opt;
        opt.ticks_per_quarter = static_cast<std::uint16_t>(1 + rng.below(2000));
        const auto back = smf::extract_notes(smf::parse_midi(smf::write_midi(smf::build_document(notes, opt)))).notes;
        ASSERT_EQ(back, notes) << "score " << i;
        for (std::size_t k = 1; k < back.size(); ++k)
            EXPECT_LE(std::tie(back[k - 1].onset_ticks, back[k - 1].pitch), std::tie(back[k].onset_ticks, back[k].pitch));
    }
}
