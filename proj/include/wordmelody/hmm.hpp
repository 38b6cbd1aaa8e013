#ifndef WORDMELODY_HMM_HPP
#define WORDMELODY_HMM_HPP

// Song structure model. Parts form an observed first-order Markov chain;
// chord-sequence tokens are latent states that emit parts. A song plan is
// made by sampling parts from their chain and Viterbi-decoding the chords.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordmelody/chord.hpp"
#include "wordmelody/corpus.hpp"
#include "wordmelody/error.hpp"
#include "wordmelody/rng.hpp"

namespace wordmelody::hmm {

using StateId = std::size_t;

struct HmmParams {
    ChordTable tokens;
    std::vector<double> pi;       // K
    std::vector<double> A;        // K x K, row = from
    std::vector<double> B;        // K x 4, row = chord token
    std::vector<double> part_pi;  // 4
    std::vector<double> part_A;   // 4 x 4

    std::size_t state_count() const { return pi.size(); }
    double a(StateId from, StateId to) const { return A[from * state_count() + to]; }
    double b(StateId state, PartLabel part) const { return B[state * kPartCount + static_cast<std::size_t>(part)]; }
    double part_a(PartLabel from, PartLabel to) const {
        return part_A[static_cast<std::size_t>(part_index(from)) * kPartCount + static_cast<std::size_t>(part_index(to))];
    }

    // Throws unless every distribution is non-negative and sums to 1 +- tol.
    void validate(double tol = 1e-9) const {
        const std::size_t k = state_count();
        if (k == 0) throw Error("HMM has no chord states");
        if (A.size() != k * k || B.size() != k * kPartCount || part_pi.size() != kPartCount ||
            part_A.size() != kPartCount * kPartCount)
            throw Error("HMM parameter shapes are inconsistent");
        auto check = [&](const double* row, std::size_t n, const char* what) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!(row[i] >= 0.0)) throw Error(std::string(what) + " has a negative or NaN entry");
                s += row[i];
            }
            if (std::abs(s - 1.0) > tol) throw Error(std::string(what) + " does not sum to 1");
        };
        check(pi.data(), k, "pi");
        check(part_pi.data(), kPartCount, "part_pi");
        for (std::size_t i = 0; i < k; ++i) {
            check(&A[i * k], k, "A row");
            check(&B[i * kPartCount], kPartCount, "B row");
        }
        for (std::size_t i = 0; i < kPartCount; ++i) check(&part_A[i * kPartCount], kPartCount, "part_A row");
    }
};

namespace detail {

// Adds `smoothing` to each cell then normalizes; a row with no mass at all
// becomes uniform.
inline void normalize_rows(std::vector<double>& m, std::size_t rows, std::size_t cols, double smoothing) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = &m[r * cols];
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] += smoothing;
            s += row[c];
        }
        for (std::size_t c = 0; c < cols; ++c) row[c] = s > 0.0 ? row[c] / s : 1.0 / static_cast<double>(cols);
    }
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

}  // namespace detail

// Count-and-normalize estimate. Samples of the same song are taken in list
// order; transitions never cross songs. Every sample chord must be in
// `tokens`.
inline HmmParams estimate_params(const std::vector<corpus::MelodySample>& samples, const ChordTable& tokens,
                                 double smoothing = 0.01) {
    if (smoothing < 0.0) throw Error("smoothing must be non-negative");
    const std::size_t k = tokens.size();
    if (k == 0) throw Error("empty chord table");
    HmmParams p;
    p.tokens = tokens;
    p.pi.assign(k, 0.0);
    p.A.assign(k * k, 0.0);
    p.B.assign(k * kPartCount, 0.0);
    p.part_pi.assign(kPartCount, 0.0);
    p.part_A.assign(kPartCount * kPartCount, 0.0);

    std::map<int, std::vector<const corpus::MelodySample*>> songs;
    std::vector<int> song_order;
    for (const auto& s : samples) {
        auto [it, inserted] = songs.try_emplace(s.song);
        if (inserted) song_order.push_back(s.song);
        it->second.push_back(&s);
    }
    for (int song : song_order) {
        const auto& seq = songs[song];
        StateId prev_chord = 0;
        std::size_t prev_part = 0;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const StateId chord = tokens.index_of(seq[i]->chord);
            const auto part = static_cast<std::size_t>(part_index(seq[i]->part));
            p.B[chord * kPartCount + part] += 1.0;
            if (i == 0) {
                p.pi[chord] += 1.0;
                p.part_pi[part] += 1.0;
            } else {
                p.A[prev_chord * k + chord] += 1.0;
                p.part_A[prev_part * kPartCount + part] += 1.0;
            }
            prev_chord = chord;
            prev_part = part;
        }
    }
    detail::normalize_rows(p.pi, 1, k, smoothing);
    detail::normalize_rows(p.A, k, k, smoothing);
    detail::normalize_rows(p.B, k, kPartCount, smoothing);
    detail::normalize_rows(p.part_pi, 1, kPartCount, smoothing);
    detail::normalize_rows(p.part_A, kPartCount, kPartCount, smoothing);
    return p;
}

// Ancestral sampling of the part chain.
inline std::vector<PartLabel> sample_parts(const HmmParams& params, std::size_t length, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PartLabel> parts;
    parts.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        std::span<const double> dist = t == 0
            ? std::span<const double>(params.part_pi)
            : std::span<const double>(&params.part_A[static_cast<std::size_t>(part_index(parts.back())) * kPartCount], kPartCount);
        parts.push_back(part_from_index(static_cast<int>(rng.categorical(dist))));
    }
    return parts;
}

inline double log_joint_probability(const HmmParams& params, const std::vector<PartLabel>& parts,
                                    const std::vector<StateId>& chords) {
    if (parts.size() != chords.size())
        throw Error("part and chord sequences differ in length (" + std::to_string(parts.size()) + " vs " +
                    std::to_string(chords.size()) + ")");
    if (parts.empty()) throw Error("empty sequence");
    using detail::safe_log;
    double s = safe_log(params.pi.at(chords[0])) + safe_log(params.b(chords[0], parts[0]));
    for (std::size_t t = 1; t < parts.size(); ++t)
        s = s + safe_log(params.a(chords[t - 1], chords[t])) + safe_log(params.b(chords[t], parts[t]));
    return s;
}

inline double joint_probability(const HmmParams& params, const std::vector<PartLabel>& parts,
                                const std::vector<StateId>& chords) {
    return std::exp(log_joint_probability(params, parts, chords));
}

namespace detail {

inline void check_emissions(const HmmParams& params, const std::vector<PartLabel>& parts) {
    if (parts.empty()) throw DecodingError("cannot decode an empty part sequence");
    for (PartLabel part : parts) {
        bool any = false;
        for (StateId s = 0; s < params.state_count() && !any; ++s) any = params.b(s, part) > 0.0;
        if (!any) throw DecodingError("no chord state can emit part '" + part_name(part) + "'");
    }
}

}  // namespace detail

// Most probable chord path in log space. Ties go to the lower state id, both
// for the final state and at every backpointer.
inline std::vector<StateId> viterbi_chords(const HmmParams& params, const std::vector<PartLabel>& parts) {
    detail::check_emissions(params, parts);
    using detail::safe_log;
    const std::size_t k = params.state_count();
    const std::size_t n = parts.size();
    std::vector<double> log_a(k * k);
    for (std::size_t i = 0; i < k * k; ++i) log_a[i] = safe_log(params.A[i]);

    std::vector<double> delta(k), next(k);
    std::vector<StateId> back(n * k, 0);
    for (StateId s = 0; s < k; ++s) delta[s] = safe_log(params.pi[s]) + safe_log(params.b(s, parts[0]));
    for (std::size_t t = 1; t < n; ++t) {
        for (StateId s = 0; s < k; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            StateId arg = 0;
            for (StateId j = 0; j < k; ++j) {
                const double v = delta[j] + log_a[j * k + s];
                if (v > best) {
                    best = v;
                    arg = j;
                }
            }
            next[s] = best + safe_log(params.b(s, parts[t]));
            back[t * k + s] = arg;
        }
        std::swap(delta, next);
    }
    double best = -std::numeric_limits<double>::infinity();
    StateId last = 0;
    for (StateId s = 0; s < k; ++s) {
        if (delta[s] > best) {
            best = delta[s];
            last = s;
        }
    }
    if (best == -std::numeric_limits<double>::infinity()) throw DecodingError("every chord path has zero probability");
    std::vector<StateId> path(n);
    path[n - 1] = last;
    for (std::size_t t = n - 1; t > 0; --t) path[t - 1] = back[t * k + path[t]];
    return path;
}

// Exhaustive search over all K^n chord paths. Among equal scores it keeps the
// path that is smallest read from the last position backwards, which is the
// path the Viterbi tie rule produces.
inline std::vector<StateId> brute_force_decode(const HmmParams& params, const std::vector<PartLabel>& parts,
                                               std::size_t max_paths = 1'000'000) {
    detail::check_emissions(params, parts);
    const std::size_t k = params.state_count();
    const std::size_t n = parts.size();
    double space = 1.0;
    for (std::size_t t = 0; t < n; ++t) space *= static_cast<double>(k);
    if (space > static_cast<double>(max_paths))
        throw Error("brute-force search space " + std::to_string(space) + " exceeds " + std::to_string(max_paths));

    // Counter with position n-1 as the most significant digit, so paths are
    // visited in reverse-lexicographic order and the first maximum wins.
    std::vector<StateId> path(n, 0), best_path;
    double best = -std::numeric_limits<double>::infinity();
    while (true) {
        const double v = log_joint_probability(params, parts, path);
        if (v > best) {
            best = v;
            best_path = path;
        }
        std::size_t t = 0;
        while (t < n && ++path[t] == k) path[t++] = 0;
        if (t == n) break;
    }
    if (best_path.empty()) throw DecodingError("every chord path has zero probability");
    return best_path;
}

// Non-default alternative to Viterbi: draws a chord path from the posterior
// p(chords | parts) by forward filtering, backward sampling.
inline std::vector<StateId> sample_chords_posterior(const HmmParams& params, const std::vector<PartLabel>& parts,
                                                    std::uint64_t seed) {
    detail::check_emissions(params, parts);
    const std::size_t k = params.state_count();
    const std::size_t n = parts.size();
    std::vector<double> alpha(n * k);
    for (StateId s = 0; s < k; ++s) alpha[s] = params.pi[s] * params.b(s, parts[0]);
    auto normalize = [&](std::size_t t) {
        double z = 0.0;
        for (StateId s = 0; s < k; ++s) z += alpha[t * k + s];
        if (!(z > 0.0)) throw DecodingError("every chord path has zero probability");
        for (StateId s = 0; s < k; ++s) alpha[t * k + s] /= z;
    };
    normalize(0);
    for (std::size_t t = 1; t < n; ++t) {
        for (StateId s = 0; s < k; ++s) {
            double acc = 0.0;
            for (StateId j = 0; j < k; ++j) acc += alpha[(t - 1) * k + j] * params.a(j, s);
            alpha[t * k + s] = acc * params.b(s, parts[t]);
        }
        normalize(t);
    }
    Rng rng(seed);
    std::vector<StateId> path(n);
    path[n - 1] = rng.categorical(std::span<const double>(&alpha[(n - 1) * k], k));
    std::vector<double> w(k);
    for (std::size_t t = n - 1; t > 0; --t) {
        for (StateId j = 0; j < k; ++j) w[j] = alpha[(t - 1) * k + j] * params.a(j, path[t]);
        path[t - 1] = rng.categorical(w);
    }
    return path;
}

inline nlohmann::json params_to_json(const HmmParams& p) {
    const std::size_t k = p.state_count();
    auto rows = [](const std::vector<double>& m, std::size_t r, std::size_t c) {
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t i = 0; i < r; ++i) out.push_back(std::vector<double>(m.begin() + static_cast<std::ptrdiff_t>(i * c),
                                                                              m.begin() + static_cast<std::ptrdiff_t>((i + 1) * c)));
        return out;
    };
    nlohmann::json j;
    j["chord_tokens"] = nlohmann::json::array();
    for (const auto& t : p.tokens.tokens()) j["chord_tokens"].push_back(t.name());
    j["parts"] = nlohmann::json::array();
    for (PartLabel part : kAllParts) j["parts"].push_back(part_name(part));
    j["pi"] = p.pi;
    j["A"] = rows(p.A, k, k);
    j["B"] = rows(p.B, k, kPartCount);
    j["part_pi"] = p.part_pi;
    j["part_A"] = rows(p.part_A, kPartCount, kPartCount);
    return j;
}

inline HmmParams params_from_json(const nlohmann::json& j) {
    HmmParams p;
    try {
        for (const auto& n : j.at("chord_tokens")) p.tokens.add(ChordSeqToken::parse(n.get<std::string>()));
        const auto parts = j.at("parts").get<std::vector<std::string>>();
        if (parts.size() != kPartCount) throw Error("HMM file must list 4 parts");
        for (int i = 0; i < kPartCount; ++i)
            if (parse_part(parts[static_cast<std::size_t>(i)]) != part_from_index(i)) throw Error("HMM file part order differs");
        auto flat = [](const nlohmann::json& rows) {
            std::vector<double> out;
            for (const auto& r : rows)
                for (const auto& v : r) out.push_back(v.get<double>());
            return out;
        };
        p.pi = j.at("pi").get<std::vector<double>>();
        p.A = flat(j.at("A"));
        p.B = flat(j.at("B"));
        p.part_pi = j.at("part_pi").get<std::vector<double>>();
        p.part_A = flat(j.at("part_A"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed HMM file: ") + e.what());
    }
    if (p.pi.size() != p.tokens.size()) throw Error("HMM file: pi length differs from the chord token count");
    p.validate(1e-6);
    return p;
}

}  // namespace wordmelody::hmm

#endif  // WORDMELODY_HMM_HPP
