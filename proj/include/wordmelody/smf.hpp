#ifndef WORDMELODY_SMF_HPP
#define WORDMELODY_SMF_HPP

// Standard MIDI File reader/writer.
//
// Supported subset for byte-exact round trips: format 0 or 1, metrical time
// division, a 6-byte header, MTrk chunks only, canonical (shortest form)
// variable-length quantities. Running status is recorded per event so that
// files which use it re-serialize identically. Files outside the subset
// (longer headers, alien chunks, padded VLQs) still parse; they just do not
// come back byte-for-byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wordmelody/error.hpp"

namespace wordmelody::smf {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint8_t kMetaStatus = 0xFF;
inline constexpr std::uint8_t kMetaEndOfTrack = 0x2F;
inline constexpr std::uint8_t kMetaTempo = 0x51;
inline constexpr std::uint8_t kMetaTimeSignature = 0x58;
inline constexpr std::uint32_t kMaxVlq = 0x0FFFFFFF;

struct MidiEvent {
    std::uint32_t delta = 0;
    // Full status byte: 0x80-0xEF channel voice, 0xF0/0xF7 sysex, 0xFF meta.
    std::uint8_t status = 0;
    // Meta type byte; only meaningful when status == 0xFF.
    std::uint8_t meta_type = 0;
    // Channel events: the 1 or 2 data bytes. Meta/sysex: the payload after
    // the length prefix. Unknown metas and sysex are kept opaque.
    Bytes data;
    // The status byte was omitted in the source stream.
    bool running_status = false;

    bool operator==(const MidiEvent&) const = default;

    bool is_channel() const { return status >= 0x80 && status < 0xF0; }
    bool is_meta() const { return status == kMetaStatus; }
    bool is_sysex() const { return status == 0xF0 || status == 0xF7; }
    bool is_end_of_track() const { return is_meta() && meta_type == kMetaEndOfTrack; }
    std::uint8_t kind() const { return status & 0xF0; }
    std::uint8_t channel() const { return status & 0x0F; }
};

struct MidiTrack {
    std::vector<MidiEvent> events;
    bool operator==(const MidiTrack&) const = default;
};

struct MidiDocument {
    std::uint16_t format = 0;
    std::uint16_t ticks_per_quarter = 480;
    std::vector<MidiTrack> tracks;
    bool operator==(const MidiDocument&) const = default;
};

struct TimedNote {
    int pitch = 60;
    std::int64_t onset_ticks = 0;
    std::int64_t duration_ticks = 1;
    int velocity = 96;
    int channel = 0;

    std::int64_t end_ticks() const { return onset_ticks + duration_ticks; }
    bool operator==(const TimedNote&) const = default;
};

struct NoteExtraction {
    std::vector<TimedNote> notes;
    std::vector<std::string> warnings;
};

inline MidiEvent end_of_track_event(std::uint32_t delta = 0) {
    MidiEvent e;
    e.delta = delta;
    e.status = kMetaStatus;
    e.meta_type = kMetaEndOfTrack;
    return e;
}

inline std::size_t channel_data_length(std::uint8_t status) {
    const std::uint8_t kind = status & 0xF0;
    return (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
}

namespace detail {

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    std::size_t size() const { return bytes_.size(); }
    bool at_end() const { return pos_ >= bytes_.size(); }

    std::uint8_t u8(const char* what) {
        if (pos_ >= bytes_.size()) throw ParseError(pos_, std::string("truncated input reading ") + what);
        return bytes_[pos_++];
    }

    std::uint8_t peek(const char* what) const {
        if (pos_ >= bytes_.size()) throw ParseError(pos_, std::string("truncated input reading ") + what);
        return bytes_[pos_];
    }

    std::uint16_t u16(const char* what) {
        const std::uint16_t hi = u8(what);
        return static_cast<std::uint16_t>((hi << 8) | u8(what));
    }

    std::uint32_t u32(const char* what) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | u8(what);
        return v;
    }

    std::uint32_t vlq(const char* what) {
        const std::size_t start = pos_;
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = u8(what);
            v = (v << 7) | (b & 0x7F);
            if ((b & 0x80) == 0) return v;
        }
        throw ParseError(start, std::string("invalid variable-length quantity in ") + what);
    }

    Bytes take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) throw ParseError(pos_, std::string("truncated ") + what);
        Bytes out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    void skip(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) throw ParseError(pos_, std::string("truncated ") + what);
        pos_ += n;
    }

    bool match(const char (&tag)[5]) const {
        if (bytes_.size() - pos_ < 4) return false;
        return std::equal(tag, tag + 4, bytes_.begin() + static_cast<std::ptrdiff_t>(pos_));
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline MidiTrack parse_track(Reader& in, std::size_t chunk_end) {
    MidiTrack track;
    std::optional<std::uint8_t> running;
    bool ended = false;
    while (in.pos() < chunk_end) {
        if (ended) throw ParseError(in.pos(), "event after end-of-track");
        MidiEvent ev;
        ev.delta = in.vlq("delta-time");
        const std::size_t status_pos = in.pos();
        std::uint8_t b = in.peek("status byte");
        if (b < 0x80) {
            if (!running) throw ParseError(status_pos, "running status used without a preceding channel status");
            ev.status = *running;
            ev.running_status = true;
        } else {
            ev.status = in.u8("status byte");
        }

        if (ev.is_channel()) {
            const std::size_t n = channel_data_length(ev.status);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t at = in.pos();
                const std::uint8_t d = in.u8("channel event data");
                if (d >= 0x80) throw ParseError(at, "status byte where channel data was expected");
                ev.data.push_back(d);
            }
            running = ev.status;
        } else if (ev.is_meta()) {
            ev.meta_type = in.u8("meta type");
            const std::uint32_t len = in.vlq("meta length");
            ev.data = in.take(len, "meta payload");
            running.reset();
            if (ev.is_end_of_track()) {
                if (!ev.data.empty()) throw ParseError(status_pos, "end-of-track with non-empty payload");
                ended = true;
            }
        } else if (ev.is_sysex()) {
            const std::uint32_t len = in.vlq("sysex length");
            ev.data = in.take(len, "sysex payload");
            running.reset();
        } else {
            throw ParseError(status_pos, "system real-time/common status not allowed in a file");
        }
        if (in.pos() > chunk_end) throw ParseError(chunk_end, "event overruns track chunk");
        track.events.push_back(std::move(ev));
    }
    if (!ended) throw ParseError(chunk_end, "track does not end with end-of-track");
    return track;
}

inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
}

inline void put_tag(Bytes& out, const char (&tag)[5]) { out.insert(out.end(), tag, tag + 4); }

}  // namespace detail

inline void write_vlq(Bytes& out, std::uint32_t value) {
    if (value > kMaxVlq) throw SerializationError("value " + std::to_string(value) + " exceeds 4-byte variable-length range");
    std::uint8_t buf[4];
    int n = 0;
    buf[n++] = static_cast<std::uint8_t>(value & 0x7F);
    while ((value >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>((value & 0x7F) | 0x80);
    while (n > 0) out.push_back(buf[--n]);
}

inline MidiDocument parse_midi(std::span<const std::uint8_t> bytes) {
    detail::Reader in(bytes);
    if (!in.match("MThd")) throw ParseError(0, "missing MThd header chunk");
    in.skip(4, "header tag");
    const std::uint32_t header_len = in.u32("header length");
    if (header_len < 6) throw ParseError(4, "header chunk shorter than 6 bytes");
    const std::size_t header_end = in.pos() + header_len;

    MidiDocument doc;
    const std::size_t format_pos = in.pos();
    doc.format = in.u16("format");
    if (doc.format == 2) throw ParseError(format_pos, "SMF format 2 is not supported");
    if (doc.format > 2) throw ParseError(format_pos, "unknown SMF format " + std::to_string(doc.format));
    const std::uint16_t ntracks = in.u16("track count");
    const std::size_t division_pos = in.pos();
    const std::uint16_t division = in.u16("division");
    if (division & 0x8000) throw ParseError(division_pos, "SMPTE time division is not supported");
    if (division == 0) throw ParseError(division_pos, "ticks per quarter must be positive");
    if (doc.format == 0 && ntracks != 1) throw ParseError(format_pos, "format 0 requires exactly one track");
    doc.ticks_per_quarter = division;
    in.skip(header_end - in.pos(), "header chunk");

    while (doc.tracks.size() < ntracks) {
        const std::size_t chunk_pos = in.pos();
        const bool is_track = in.match("MTrk");
        in.skip(4, "chunk tag");
        const std::uint32_t len = in.u32("chunk length");
        if (in.size() - in.pos() < len)
            throw ParseError(in.size(), "chunk at byte " + std::to_string(chunk_pos) + " declares " + std::to_string(len) +
                                            " bytes but only " + std::to_string(in.size() - in.pos()) + " remain");
        if (!is_track) {
            in.skip(len, "unknown chunk");
            continue;
        }
        doc.tracks.push_back(detail::parse_track(in, in.pos() + len));
    }
    if (!in.at_end()) throw ParseError(in.pos(), "trailing bytes after last track");
    return doc;
}

inline Bytes write_midi(const MidiDocument& doc) {
    if (doc.format > 1) throw SerializationError("only SMF formats 0 and 1 can be written");
    if (doc.ticks_per_quarter == 0 || (doc.ticks_per_quarter & 0x8000))
        throw SerializationError("ticks per quarter must be in [1, 32767]");
    if (doc.tracks.size() > 0xFFFF) throw SerializationError("too many tracks");
    if (doc.format == 0 && doc.tracks.size() != 1) throw SerializationError("format 0 requires exactly one track");

    Bytes out;
    detail::put_tag(out, "MThd");
    detail::put_u32(out, 6);
    detail::put_u16(out, doc.format);
    detail::put_u16(out, static_cast<std::uint16_t>(doc.tracks.size()));
    detail::put_u16(out, doc.ticks_per_quarter);

    for (std::size_t t = 0; t < doc.tracks.size(); ++t) {
        const auto& events = doc.tracks[t].events;
        if (events.empty() || !events.back().is_end_of_track())
            throw SerializationError("track " + std::to_string(t) + " does not end with end-of-track");
        Bytes body;
        std::optional<std::uint8_t> running;
        for (std::size_t i = 0; i < events.size(); ++i) {
            const MidiEvent& ev = events[i];
            if (ev.is_end_of_track() && i + 1 != events.size())
                throw SerializationError("end-of-track before the last event of track " + std::to_string(t));
            write_vlq(body, ev.delta);
            if (ev.is_channel()) {
                if (ev.data.size() != channel_data_length(ev.status))
                    throw SerializationError("channel event with wrong data length");
                if (ev.running_status) {
                    if (running != ev.status) throw SerializationError("running status flag without matching preceding status");
                } else {
                    body.push_back(ev.status);
                }
                for (std::uint8_t d : ev.data) {
                    if (d >= 0x80) throw SerializationError("channel data byte >= 0x80");
                    body.push_back(d);
                }
                running = ev.status;
            } else if (ev.is_meta() || ev.is_sysex()) {
                if (ev.running_status) throw SerializationError("running status on a meta/sysex event");
                body.push_back(ev.status);
                if (ev.is_meta()) body.push_back(ev.meta_type);
                if (ev.data.size() > kMaxVlq) throw SerializationError("payload too large");
                write_vlq(body, static_cast<std::uint32_t>(ev.data.size()));
                body.insert(body.end(), ev.data.begin(), ev.data.end());
                running.reset();
            } else {
                throw SerializationError("invalid status byte in event");
            }
        }
        detail::put_tag(out, "MTrk");
        detail::put_u32(out, static_cast<std::uint32_t>(body.size()));
        out.insert(out.end(), body.begin(), body.end());
    }
    return out;
}

// Pairs note-on/note-off events first-on/first-off per (channel, pitch).
// All tracks are merged. Velocity-0 note-ons count as note-offs.
inline NoteExtraction extract_notes(const MidiDocument& doc, const std::optional<std::set<int>>& channel_filter = std::nullopt) {
    NoteExtraction result;
    for (std::size_t t = 0; t < doc.tracks.size(); ++t) {
        std::map<std::pair<int, int>, std::deque<std::pair<std::int64_t, int>>> open;
        std::int64_t tick = 0;
        for (const MidiEvent& ev : doc.tracks[t].events) {
            tick += ev.delta;
            if (!ev.is_channel()) continue;
            const int channel = ev.channel();
            if (channel_filter && !channel_filter->contains(channel)) continue;
            const bool on = ev.kind() == 0x90 && ev.data[1] > 0;
            const bool off = ev.kind() == 0x80 || (ev.kind() == 0x90 && ev.data[1] == 0);
            if (!on && !off) continue;
            const int pitch = ev.data[0];
            auto& queue = open[{channel, pitch}];
            if (on) {
                queue.emplace_back(tick, ev.data[1]);
                continue;
            }
            if (queue.empty()) {
                result.warnings.push_back("track " + std::to_string(t) + ": note-off without note-on (pitch " +
                                          std::to_string(pitch) + ", tick " + std::to_string(tick) + ")");
                continue;
            }
            auto [onset, velocity] = queue.front();
            queue.pop_front();
            if (tick == onset) {
                result.warnings.push_back("track " + std::to_string(t) + ": zero-length note dropped (pitch " +
                                          std::to_string(pitch) + ", tick " + std::to_string(tick) + ")");
                continue;
            }
            result.notes.push_back({pitch, onset, tick - onset, velocity, channel});
        }
        for (auto& [key, queue] : open) {
            for (auto [onset, velocity] : queue) {
                if (tick == onset) {
                    result.warnings.push_back("track " + std::to_string(t) + ": unterminated zero-length note dropped");
                    continue;
                }
                result.warnings.push_back("track " + std::to_string(t) + ": note-on without note-off closed at final tick (pitch " +
                                          std::to_string(key.second) + ", tick " + std::to_string(onset) + ")");
                result.notes.push_back({key.second, onset, tick - onset, velocity, key.first});
            }
        }
    }
    std::sort(result.notes.begin(), result.notes.end(), [](const TimedNote& a, const TimedNote& b) {
        return std::tie(a.onset_ticks, a.pitch, a.channel, a.duration_ticks, a.velocity) <
               std::tie(b.onset_ticks, b.pitch, b.channel, b.duration_ticks, b.velocity);
    });
    return result;
}

struct ExportOptions {
    std::uint16_t ticks_per_quarter = 480;
    double tempo_bpm = 120.0;
    bool time_signature = true;  // emit a 4/4 time signature meta
};

// Builds a format-0 document holding `notes`. Note-offs are written before
// note-ons at the same tick so abutting repeated pitches pair correctly.
inline MidiDocument build_document(std::span<const TimedNote> notes, const ExportOptions& options = {}) {
    struct Timed {
        std::int64_t tick;
        int order;  // 0 = off, 1 = on
        std::size_t seq;
        MidiEvent ev;
    };
    std::vector<Timed> timed;
    timed.reserve(notes.size() * 2);
    for (std::size_t i = 0; i < notes.size(); ++i) {
        const TimedNote& n = notes[i];
        if (n.pitch < 0 || n.pitch > 127 || n.channel < 0 || n.channel > 15 || n.velocity < 1 || n.velocity > 127 ||
            n.duration_ticks < 1 || n.onset_ticks < 0)
            throw SerializationError("note out of range at index " + std::to_string(i));
        MidiEvent on;
        on.status = static_cast<std::uint8_t>(0x90 | n.channel);
        on.data = {static_cast<std::uint8_t>(n.pitch), static_cast<std::uint8_t>(n.velocity)};
        MidiEvent off;
        off.status = static_cast<std::uint8_t>(0x80 | n.channel);
        off.data = {static_cast<std::uint8_t>(n.pitch), 0x40};
        timed.push_back({n.onset_ticks, 1, i, std::move(on)});
        timed.push_back({n.end_ticks(), 0, i, std::move(off)});
    }
    std::stable_sort(timed.begin(), timed.end(), [](const Timed& a, const Timed& b) {
        return std::tie(a.tick, a.order, a.seq) < std::tie(b.tick, b.order, b.seq);
    });

    MidiDocument doc;
    doc.format = 0;
    doc.ticks_per_quarter = options.ticks_per_quarter;
    MidiTrack track;

    MidiEvent tempo;
    tempo.status = kMetaStatus;
    tempo.meta_type = kMetaTempo;
    const auto usec = static_cast<std::uint32_t>(std::llround(60'000'000.0 / options.tempo_bpm));
    tempo.data = {static_cast<std::uint8_t>(usec >> 16), static_cast<std::uint8_t>((usec >> 8) & 0xFF),
                  static_cast<std::uint8_t>(usec & 0xFF)};
    track.events.push_back(tempo);
    if (options.time_signature) {
        MidiEvent ts;
        ts.status = kMetaStatus;
        ts.meta_type = kMetaTimeSignature;
        ts.data = {4, 2, 24, 8};
        track.events.push_back(ts);
    }

    std::int64_t last = 0;
    for (auto& t : timed) {
        const std::int64_t delta = t.tick - last;
        if (delta > kMaxVlq) throw SerializationError("delta-time overflow");
        t.ev.delta = static_cast<std::uint32_t>(delta);
        last = t.tick;
        track.events.push_back(std::move(t.ev));
    }
    track.events.push_back(end_of_track_event());
    doc.tracks.push_back(std::move(track));
    return doc;
}

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace wordmelody::smf

#endif  // WORDMELODY_SMF_HPP
