#ifndef WORDMELODY_NOTE_WORD_HPP
#define WORDMELODY_NOTE_WORD_HPP

#include <compare>
#include <numeric>
#include <string>

#include "wordmelody/error.hpp"

namespace wordmelody {

// Positions per 2-bar window in 4/4: 32 sixteenths.
inline constexpr int kWindowSixteenths = 32;
inline constexpr int kWindowBars = 2;

// A quantized note length, stored as a count of sixteenth notes.
// Legal values: 1/16 .. 7/16 and 4/8, 5/8, 6/8, 7/8, 1.
class Duration {
public:
    constexpr Duration() = default;

    static constexpr bool is_valid_sixteenths(int s) {
        return (s >= 1 && s <= 8) || s == 10 || s == 12 || s == 14 || s == 16;
    }

    static Duration from_sixteenths(int s) {
        if (!is_valid_sixteenths(s)) throw Error("not a quantized duration: " + std::to_string(s) + "/16");
        return Duration(s);
    }

    static Duration from_fraction(int numerator, int denominator) {
        if (denominator <= 0 || 16 % denominator != 0 || numerator <= 0)
            throw Error("not a quantized duration: " + std::to_string(numerator) + "/" + std::to_string(denominator));
        return from_sixteenths(numerator * (16 / denominator));
    }

    constexpr int sixteenths() const { return sixteenths_; }
    int numerator() const { return sixteenths_ / std::gcd(sixteenths_, 16); }
    int denominator() const { return 16 / std::gcd(sixteenths_, 16); }
    double whole_notes() const { return sixteenths_ / 16.0; }
    std::string to_string() const { return std::to_string(numerator()) + "/" + std::to_string(denominator()); }

    auto operator<=>(const Duration&) const = default;

private:
    constexpr explicit Duration(int s) : sixteenths_(s) {}
    int sixteenths_ = 1;
};

// One note as a single vocabulary item: pitch, sixteenth position within the
// 2-bar window, and quantized length.
struct NoteWord {
    int pitch = 60;
    int onset = 0;
    Duration duration;

    auto operator<=>(const NoteWord&) const = default;
};

struct NoteWordHash {
    std::size_t operator()(const NoteWord& w) const noexcept {
        return static_cast<std::size_t>((w.pitch * 32 + w.onset) * 17 + w.duration.sixteenths());
    }
};

}  // namespace wordmelody

#endif  // WORDMELODY_NOTE_WORD_HPP
