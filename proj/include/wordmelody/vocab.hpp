#ifndef WORDMELODY_VOCAB_HPP
#define WORDMELODY_VOCAB_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordmelody/chord.hpp"
#include "wordmelody/corpus.hpp"
#include "wordmelody/error.hpp"
#include "wordmelody/note_word.hpp"

namespace wordmelody {

using TokenId = std::int32_t;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kReservedTokens = 2;

struct BosMarker {
    bool operator==(const BosMarker&) const = default;
};
struct EosMarker {
    bool operator==(const EosMarker&) const = default;
};
using Token = std::variant<BosMarker, EosMarker, NoteWord>;

// Closed note-word vocabulary. Ids 0 and 1 are BOS/EOS; words follow in
// order of first appearance.
class Vocabulary {
public:
    Vocabulary() = default;

    static Vocabulary from_words(const std::vector<NoteWord>& words) {
        Vocabulary v;
        for (const auto& w : words) v.insert(w);
        return v;
    }

    std::size_t size() const { return words_.size() + kReservedTokens; }
    std::size_t word_count() const { return words_.size(); }
    const std::vector<NoteWord>& words() const { return words_; }

    bool contains(const NoteWord& w) const { return ids_.contains(w); }

    TokenId encode(const NoteWord& w) const {
        auto it = ids_.find(w);
        if (it == ids_.end())
            throw OutOfVocabulary("word (pitch " + std::to_string(w.pitch) + ", onset " + std::to_string(w.onset) +
                                  ", length " + w.duration.to_string() + ") is not in the vocabulary");
        return it->second;
    }

    Token decode(TokenId id) const {
        if (id == kBos) return BosMarker{};
        if (id == kEos) return EosMarker{};
        return word_at(id);
    }

    const NoteWord& word_at(TokenId id) const {
        if (id < kReservedTokens || static_cast<std::size_t>(id) >= size())
            throw VocabularyError("token id " + std::to_string(id) + " is not a word id");
        return words_[static_cast<std::size_t>(id - kReservedTokens)];
    }

    // Pitch of each id; reserved ids get -1.
    std::vector<int> pitches() const {
        std::vector<int> p(size(), -1);
        for (std::size_t i = 0; i < words_.size(); ++i) p[i + kReservedTokens] = words_[i].pitch;
        return p;
    }

    // FNV-1a over the id -> word mapping. Checkpoints carry it.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xFF;
                h *= 0x100000001b3ULL;
            }
        };
        mix(size());
        for (const auto& w : words_) {
            mix(static_cast<std::uint64_t>(w.pitch));
            mix(static_cast<std::uint64_t>(w.onset));
            mix(static_cast<std::uint64_t>(w.duration.sixteenths()));
        }
        return h;
    }

    bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

private:
    TokenId insert(const NoteWord& w) {
        auto [it, inserted] = ids_.try_emplace(w, static_cast<TokenId>(words_.size() + kReservedTokens));
        if (inserted) words_.push_back(w);
        return it->second;
    }

    std::vector<NoteWord> words_;
    std::unordered_map<NoteWord, TokenId, NoteWordHash> ids_;
};

inline Vocabulary build_vocab(const std::vector<corpus::MelodySample>& samples) {
    std::vector<NoteWord> all;
    for (const auto& s : samples) all.insert(all.end(), s.words.begin(), s.words.end());
    if (all.empty()) throw VocabularyError("cannot build a vocabulary from an empty corpus");
    return Vocabulary::from_words(all);
}

// BOS, then one id per word. The matching targets are these ids shifted by
// one with EOS appended.
inline std::vector<TokenId> encode_sentence(const Vocabulary& v, const std::vector<NoteWord>& words) {
    std::vector<TokenId> ids;
    ids.reserve(words.size() + 1);
    ids.push_back(kBos);
    for (const auto& w : words) ids.push_back(v.encode(w));
    return ids;
}

inline std::vector<TokenId> sentence_targets(const std::vector<TokenId>& inputs) {
    std::vector<TokenId> t(inputs.begin() + 1, inputs.end());
    t.push_back(kEos);
    return t;
}

inline std::vector<NoteWord> decode_sentence(const Vocabulary& v, const std::vector<TokenId>& ids) {
    std::vector<NoteWord> words;
    for (TokenId id : ids) {
        if (id == kBos || id == kEos) continue;
        words.push_back(v.word_at(id));
    }
    return words;
}

// Two-hot conditioning input: one-hot chord-sequence token followed by a
// one-hot part label.
struct ConditionVector {
    std::size_t chord_id = 0;
    int part_id = 0;
    std::size_t chord_count = 0;

    std::size_t dimension() const { return chord_count + kPartCount; }

    std::vector<double> dense() const {
        std::vector<double> v(dimension(), 0.0);
        v[chord_id] = 1.0;
        v[chord_count + static_cast<std::size_t>(part_id)] = 1.0;
        return v;
    }

    bool operator==(const ConditionVector&) const = default;
};

inline ConditionVector encode_condition(const ChordSeqToken& chord, PartLabel part, const ChordTable& table) {
    const auto idx = table.find(chord);
    if (!idx) throw VocabularyError("unknown chord sequence token " + chord.name());
    return {*idx, part_index(part), table.size()};
}

// Reference tokens first, then any corpus tokens outside it, in order of
// appearance.
inline ChordTable condition_table(const std::vector<corpus::MelodySample>& samples,
                                  const ChordTable& base = reference_chord_table()) {
    ChordTable t = base;
    for (const auto& s : samples) t.add(s.chord);
    return t;
}

inline nlohmann::json vocab_to_json(const Vocabulary& v, const ChordTable& table) {
    nlohmann::json words = nlohmann::json::array();
    for (std::size_t i = 0; i < v.words().size(); ++i) {
        const auto& w = v.words()[i];
        words.push_back({{"id", i + kReservedTokens},
                         {"pitch", w.pitch},
                         {"onset", w.onset},
                         {"duration_numerator", w.duration.numerator()},
                         {"duration_denominator", w.duration.denominator()}});
    }
    nlohmann::json chords = nlohmann::json::array();
    for (const auto& t : table.tokens()) chords.push_back(t.name());
    return {{"reserved", {{"BOS", kBos}, {"EOS", kEos}}}, {"words", std::move(words)}, {"chord_tokens", std::move(chords)}};
}

struct VocabBundle {
    Vocabulary vocab;
    ChordTable chords;
};

inline VocabBundle vocab_from_json(const nlohmann::json& j) {
    VocabBundle b;
    try {
        std::vector<NoteWord> words;
        TokenId expected = kReservedTokens;
        for (const auto& e : j.at("words")) {
            if (e.at("id").get<TokenId>() != expected) throw VocabularyError("vocabulary ids are not dense");
            ++expected;
            NoteWord w;
            w.pitch = e.at("pitch").get<int>();
            w.onset = e.at("onset").get<int>();
            w.duration = Duration::from_fraction(e.at("duration_numerator").get<int>(), e.at("duration_denominator").get<int>());
            words.push_back(w);
        }
        b.vocab = Vocabulary::from_words(words);
        if (b.vocab.word_count() != words.size()) throw VocabularyError("duplicate words in vocabulary file");
        for (const auto& name : j.at("chord_tokens")) b.chords.add(ChordSeqToken::parse(name.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw VocabularyError(std::string("malformed vocabulary file: ") + e.what());
    }
    return b;
}

}  // namespace wordmelody

#endif  // WORDMELODY_VOCAB_HPP
