#ifndef WORDMELODY_CHORD_HPP
#define WORDMELODY_CHORD_HPP

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wordmelody/error.hpp"

namespace wordmelody {

enum class ChordQuality { Major, Minor, Augmented };

// Bar-level chord label. The label set is closed: major and minor triads on
// any of the 12 roots, plus C augmented.
struct Chord {
    int root = 0;  // pitch class, C = 0
    ChordQuality quality = ChordQuality::Major;

    auto operator<=>(const Chord&) const = default;

    std::string name() const {
        static constexpr std::array<const char*, 12> kNames = {"C", "C#", "D", "D#", "E", "F",
                                                               "F#", "G", "G#", "A", "A#", "B"};
        std::string s = kNames[static_cast<std::size_t>(root)];
        if (quality == ChordQuality::Minor) s += "m";
        if (quality == ChordQuality::Augmented) s += "aug";
        return s;
    }

    static Chord parse(std::string_view text) {
        auto fail = [&] { return Error("unknown chord label '" + std::string(text) + "'"); };
        if (text.empty()) throw fail();
        static constexpr std::array<int, 7> kLetter = {9, 11, 0, 2, 4, 5, 7};  // A..G
        const char letter = text[0];
        if (letter < 'A' || letter > 'G') throw fail();
        int root = kLetter[static_cast<std::size_t>(letter - 'A')];
        std::size_t i = 1;
        if (i < text.size() && text[i] == '#') {
            root += 1;
            ++i;
        } else if (i < text.size() && text[i] == 'b') {
            root += 11;
            ++i;
        }
        root %= 12;
        const std::string_view suffix = text.substr(i);
        Chord c{root, ChordQuality::Major};
        if (suffix.empty()) return c;
        if (suffix == "m") {
            c.quality = ChordQuality::Minor;
            return c;
        }
        if (suffix == "aug" && root == 0) {
            c.quality = ChordQuality::Augmented;
            return c;
        }
        throw fail();
    }
};

// Ordered pair of bar chords covering one 2-bar window, e.g. "C-Am".
struct ChordSeqToken {
    Chord first;
    Chord second;

    auto operator<=>(const ChordSeqToken&) const = default;

    std::string name() const { return first.name() + "-" + second.name(); }

    static ChordSeqToken parse(std::string_view text) {
        const auto dash = text.find('-');
        if (dash == std::string_view::npos) throw Error("chord sequence token needs a '-': '" + std::string(text) + "'");
        return {Chord::parse(text.substr(0, dash)), Chord::parse(text.substr(dash + 1))};
    }
};

enum class PartLabel { Verse = 0, PreChorus = 1, Chorus = 2, Bridge = 3 };
inline constexpr int kPartCount = 4;

inline constexpr std::array<PartLabel, kPartCount> kAllParts = {PartLabel::Verse, PartLabel::PreChorus,
                                                               PartLabel::Chorus, PartLabel::Bridge};

inline int part_index(PartLabel p) { return static_cast<int>(p); }

inline PartLabel part_from_index(int i) {
    if (i < 0 || i >= kPartCount) throw Error("part index out of range: " + std::to_string(i));
    return static_cast<PartLabel>(i);
}

inline std::string part_name(PartLabel p) {
    switch (p) {
        case PartLabel::Verse: return "verse";
        case PartLabel::PreChorus: return "pre-chorus";
        case PartLabel::Chorus: return "chorus";
        case PartLabel::Bridge: return "bridge";
    }
    return "?";
}

inline PartLabel parse_part(std::string_view text) {
    for (PartLabel p : kAllParts)
        if (part_name(p) == text) return p;
    throw Error("unknown part label '" + std::string(text) + "'");
}

// Index over chord-sequence tokens. Order is significant: it fixes the
// condition-vector layout and the HMM state ids.
class ChordTable {
public:
    ChordTable() = default;
    explicit ChordTable(const std::vector<ChordSeqToken>& tokens) {
        for (const auto& t : tokens) add(t);
    }

    // Appends `token` if new; returns its index either way.
    std::size_t add(const ChordSeqToken& token) {
        auto [it, inserted] = index_.try_emplace(token, tokens_.size());
        if (inserted) tokens_.push_back(token);
        return it->second;
    }

    std::optional<std::size_t> find(const ChordSeqToken& token) const {
        auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t index_of(const ChordSeqToken& token) const {
        auto idx = find(token);
        if (!idx) throw Error("chord sequence " + token.name() + " is not in the chord table");
        return *idx;
    }

    const ChordSeqToken& at(std::size_t i) const { return tokens_.at(i); }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<ChordSeqToken>& tokens() const { return tokens_; }

    bool operator==(const ChordTable& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<ChordSeqToken> tokens_;
    std::map<ChordSeqToken, std::size_t> index_;
};

// The 56 two-bar chord sequences of the reference pop corpus, in its
// published order, all expressed in C major.
inline const ChordTable& reference_chord_table() {
    static const ChordTable table = [] {
        static constexpr std::array<std::string_view, 56> kNames = {
            "C-Em",  "A#-F",  "Dm-Em", "Dm-G",  "Dm-C",  "Am-Em",  "F-C",   "F-G",   "Dm-F",  "C-C",
            "C-E",   "Am-G",  "F-F",   "G-G",   "Am-Am", "Dm-Dm",  "C-A#",  "Em-F",  "C-G",   "G#-A#",
            "F-Am",  "G#-Fm", "Am-Gm", "F-E",   "Dm-Am", "Em-Em",  "G#-G#", "Em-Am", "C-Am",  "F-Dm",
            "G#-G",  "F-A#",  "Am-G#", "C-D",   "G-Am",  "Am-C",   "Am-A#", "A#-G",  "Am-F",  "A#-Am",
            "E-Am",  "Dm-E",  "A-G",   "Am-Dm", "Em-Dm", "C-F#m",  "Am-D",  "G#-Em", "C-Dm",  "C-F",
            "G-C",   "A#-A#", "Am-Caug", "Fm-G", "A-A",  "F-Em"};
        ChordTable t;
        for (auto n : kNames) t.add(ChordSeqToken::parse(n));
        return t;
    }();
    return table;
}

}  // namespace wordmelody

#endif  // WORDMELODY_CHORD_HPP
