#ifndef WORDMELODY_CHECK_HPP
#define WORDMELODY_CHECK_HPP

// Self-verification routines. Each compares an implementation path against
// an independent oracle: central finite differences for gradients, exhaustive
// path enumeration for Viterbi, and parse/write identities for the MIDI codec.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include "wordmelody/hmm.hpp"
#include "wordmelody/neural.hpp"
#include "wordmelody/rng.hpp"
#include "wordmelody/smf.hpp"

namespace wordmelody::check {

using neural::TokenId;

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero entries from
// dominating; finite-difference noise sits around 1e-11 in absolute terms.
inline double relative_error(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct TinyInstance {
    neural::ModelParams params;
    std::vector<double> condition;
    std::vector<TokenId> inputs;
    std::vector<TokenId> targets;
    std::vector<double> penalty_weights;
    double mu = 0.0;
    double dropout_p = 0.0;
    std::uint64_t dropout_seed = 0;
};

// Random tiny model: V words with pitches spread around the [60, 72] range so
// the penalty weights are mixed zero/non-zero.
inline TinyInstance make_tiny_instance(std::uint64_t seed, std::size_t vocab = 5, std::size_t dim = 3, std::size_t length = 4,
                                       double mu = 0.1, double dropout_p = 0.0) {
    Rng rng(seed);
    neural::ModelConfig c;
    c.vocab_size = vocab;
    c.embed_dim = dim;
    c.hidden_dim = dim;
    c.condition_dim = 3;
    TinyInstance inst{neural::init_params(c, seed * 7919 + 1, 0.5), {}, {}, {}, {}, mu, dropout_p, seed + 99};
    for (double& b : inst.params.gate_bias.values) b = rng.uniform(-0.5, 0.5);
    for (double& b : inst.params.output_bias.values) b = rng.uniform(-0.5, 0.5);
    inst.condition.assign(c.condition_dim, 0.0);
    inst.condition[rng.below(c.condition_dim)] = 1.0;
    inst.condition[rng.below(c.condition_dim)] += 1.0;
    inst.inputs.push_back(0);
    for (std::size_t t = 1; t < length; ++t) inst.inputs.push_back(static_cast<TokenId>(1 + rng.below(vocab - 1)));
    inst.targets.assign(inst.inputs.begin() + 1, inst.inputs.end());
    inst.targets.push_back(1);
    std::vector<int> pitches(vocab, -1);
    for (std::size_t i = 2; i < vocab; ++i) pitches[i] = 52 + static_cast<int>(rng.below(30));
    inst.penalty_weights = neural::range_penalty_weights(pitches, {});
    return inst;
}

// Regularized objective with a fixed dropout mask (same seed every call).
inline double tiny_objective(const TinyInstance& inst, const neural::ModelParams& params) {
    Rng rng(inst.dropout_seed);
    const auto tr = neural::forward_sample(params, inst.condition, inst.inputs, inst.dropout_p, inst.dropout_p > 0 ? &rng : nullptr);
    double ce = neural::cross_entropy(tr.logits, inst.targets);
    double pen = 0.0;
    for (const auto& l : tr.logits) pen += neural::expected_penalty(neural::softmax(l), inst.penalty_weights);
    return ce + inst.mu * pen / static_cast<double>(tr.logits.size());
}

inline neural::Gradients tiny_analytic_gradient(const TinyInstance& inst) {
    neural::Gradients g(inst.params.config);
    Rng rng(inst.dropout_seed);
    neural::accumulate_sample_gradient(inst.params, inst.condition, inst.inputs, inst.targets, inst.penalty_weights, inst.mu,
                                       inst.dropout_p, inst.dropout_p > 0 ? &rng : nullptr, g);
    return g;
}

// Max relative error over every parameter between the analytic gradient and
// a central difference with step h.
inline double gradient_check_error(const TinyInstance& inst, double h = 1e-5) {
    const auto analytic = tiny_analytic_gradient(inst);
    neural::ModelParams probe = inst.params;
    std::vector<neural::Tensor*> probe_tensors;
    probe.for_each([&](const char*, neural::Tensor& t) { probe_tensors.push_back(&t); });
    std::vector<const neural::Tensor*> grad_tensors;
    analytic.for_each([&](const char*, const neural::Tensor& t) { grad_tensors.push_back(&t); });
    double worst = 0.0;
    for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
        auto& t = *probe_tensors[k];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t[i];
            t[i] = saved + h;
            const double up = tiny_objective(inst, probe);
            t[i] = saved - h;
            const double down = tiny_objective(inst, probe);
            t[i] = saved;
            worst = std::max(worst, relative_error((*grad_tensors[k])[i], (up - down) / (2 * h)));
        }
    }
    return worst;
}

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

// Each instance is checked with the regularizer (mu = 0.5) and without it;
// every fourth one also carries a fixed dropout mask.
inline CheckResult check_gradients(int instances = 20, double tolerance = 1e-5) {
    double worst = 0.0;
    for (int s = 0; s < instances; ++s) {
        const double dropout = s % 4 == 3 ? 0.5 : 0.0;
        for (double mu : {0.5, 0.0})
            worst = std::max(worst, gradient_check_error(make_tiny_instance(static_cast<std::uint64_t>(s) + 1, 5, 3, 4, mu, dropout)));
    }
    return {"gradient fidelity", worst < tolerance, "max relative error " + sci(worst)};
}

inline CheckResult check_regularizer() {
    const std::vector<int> pitches = {58, 65, 74};
    const auto w = neural::range_penalty_weights(pitches, {});
    const std::vector<double> p(3, 1.0 / 3.0);
    const double c = neural::expected_penalty(p, w);
    const auto add = neural::regularized_softmax_grad(p, w, 1.0);
    bool ok = w == std::vector<double>{2, 0, 2} && std::abs(c - 4.0 / 3.0) < 1e-15 && std::abs(add[0] - 2.0 / 9.0) < 1e-15 &&
              std::abs(add[1] + 4.0 / 9.0) < 1e-15 && std::abs(add[2] - 2.0 / 9.0) < 1e-15;
    Rng rng(2024);
    double worst_sum = 0.0;
    for (int d = 0; d < 1000; ++d) {
        const std::size_t v = 2 + rng.below(40);
        std::vector<double> logits(v), weights(v);
        for (auto& l : logits) l = rng.uniform(-5, 5);
        for (auto& x : weights) x = std::floor(rng.uniform(0, 20));
        const auto g = neural::regularized_softmax_grad(neural::softmax(logits), weights, 1.0);
        double s = 0.0;
        for (double x : g) s += x;
        worst_sum = std::max(worst_sum, std::abs(s));
    }
    ok = ok && worst_sum < 1e-12;
    return {"regularizer exactness", ok, "worked example C=4/3, addend/mu=[2/9,-4/9,2/9]; max |sum| " + sci(worst_sum)};
}

// Random row-stochastic HMM over `k` chord states.
inline hmm::HmmParams random_hmm(std::size_t k, Rng& rng) {
    hmm::HmmParams p;
    const auto& ref = reference_chord_table();
    for (std::size_t i = 0; i < k; ++i) p.tokens.add(ref.at(i));
    auto fill = [&](std::vector<double>& m, std::size_t rows, std::size_t cols) {
        m.assign(rows * cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += (m[r * cols + c] = rng.uniform() + 1e-3);
            for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] /= s;
        }
    };
    fill(p.pi, 1, k);
    fill(p.A, k, k);
    fill(p.B, k, kPartCount);
    fill(p.part_pi, 1, kPartCount);
    fill(p.part_A, kPartCount, kPartCount);
    return p;
}

// The two-state worked example: tokens {C-C, F-G}.
inline hmm::HmmParams worked_example_hmm() {
    hmm::HmmParams p;
    p.tokens.add(ChordSeqToken::parse("C-C"));
    p.tokens.add(ChordSeqToken::parse("F-G"));
    p.pi = {0.6, 0.4};
    p.A = {0.7, 0.3, 0.4, 0.6};
    // Only verse and chorus carry mass.
    p.B = {0.8, 0.0, 0.2, 0.0, 0.3, 0.0, 0.7, 0.0};
    p.part_pi = {1.0, 0.0, 0.0, 0.0};
    p.part_A = {0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25};
    return p;
}

inline CheckResult check_viterbi(int instances = 100) {
    Rng rng(77);
    int mismatches = 0;
    for (int i = 0; i < instances; ++i) {
        const std::size_t k = 1 + rng.below(4);
        const std::size_t n = 1 + rng.below(6);
        const auto params = random_hmm(k, rng);
        std::vector<PartLabel> parts;
        for (std::size_t t = 0; t < n; ++t) parts.push_back(part_from_index(static_cast<int>(rng.below(kPartCount))));
        if (hmm::viterbi_chords(params, parts) != hmm::brute_force_decode(params, parts)) ++mismatches;
    }
    const auto ex = worked_example_hmm();
    const std::vector<PartLabel> parts = {PartLabel::Verse, PartLabel::Chorus};
    const auto path = hmm::viterbi_chords(ex, parts);
    const double joint = hmm::joint_probability(ex, parts, path);
    const bool ok = mismatches == 0 && path == std::vector<hmm::StateId>{0, 1} && std::abs(joint - 0.1008) <= 1e-12;
    return {"HMM oracle equivalence", ok,
            std::to_string(mismatches) + " mismatches over " + std::to_string(instances) + " instances; worked example joint " +
                sci(joint)};
}

// Notes with no overlap between equal (channel, pitch) pairs, sorted the way
// extract_notes sorts.
inline std::vector<smf::TimedNote> random_score(Rng& rng, std::size_t count) {
    std::vector<smf::TimedNote> notes;
    while (notes.size() < count) {
        smf::TimedNote n;
        n.pitch = static_cast<int>(rng.below(128));
        n.channel = static_cast<int>(rng.below(16));
        n.onset_ticks = static_cast<std::int64_t>(rng.below(20000));
        n.duration_ticks = 1 + static_cast<std::int64_t>(rng.below(2000));
        n.velocity = 1 + static_cast<int>(rng.below(127));
        const bool clash = std::any_of(notes.begin(), notes.end(), [&](const smf::TimedNote& o) {
            return o.pitch == n.pitch && o.channel == n.channel && o.onset_ticks < n.end_ticks() && n.onset_ticks < o.end_ticks();
        });
        if (!clash) notes.push_back(n);
    }
    std::sort(notes.begin(), notes.end(), [](const smf::TimedNote& a, const smf::TimedNote& b) {
        return std::tie(a.onset_ticks, a.pitch, a.channel, a.duration_ticks, a.velocity) <
               std::tie(b.onset_ticks, b.pitch, b.channel, b.duration_ticks, b.velocity);
    });
    return notes;
}

// Hand-assembled files exercising running status, velocity-0 note-offs,
// sysex, an unknown meta event and a two-track format-1 layout.
inline std::vector<smf::Bytes> builtin_midi_fixtures() {
    return {
        // Format 0, one empty track.
        {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0, 'M', 'T', 'r', 'k', 0, 0, 0, 4, 0x00, 0xFF, 0x2F, 0x00},
        // Format 0: C4+E4 at tick 0 (second with running status), released at
        // 480 by velocity-0 note-ons under running status.
        {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0, 'M', 'T', 'r', 'k', 0, 0, 0, 18,
         0x00, 0x90, 0x3C, 0x60, 0x00, 0x40, 0x60, 0x83, 0x60, 0x3C, 0x00, 0x00, 0x40, 0x00, 0x00, 0xFF, 0x2F, 0x00},
        // Format 1, two tracks: tempo + sysex + unknown meta 0x7F, then a
        // program change and a note with a two-byte delta.
        {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 1, 0, 2, 0x00, 0x60,
         'M', 'T', 'r', 'k', 0, 0, 0, 26,
         0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20,
         0x00, 0xF0, 0x05, 0x7E, 0x7F, 0x09, 0x01, 0xF7,
         0x00, 0xFF, 0x7F, 0x03, 0x00, 0x00, 0x41,
         0x00, 0xFF, 0x2F, 0x00,
         'M', 'T', 'r', 'k', 0, 0, 0, 16,
         0x00, 0xC1, 0x05, 0x00, 0x91, 0x48, 0x50, 0x81, 0x40, 0x81, 0x48, 0x40, 0x00, 0xFF, 0x2F, 0x00},
    };
}

inline CheckResult check_midi_roundtrip(int scores = 1000) {
    int byte_failures = 0;
    for (const auto& f : builtin_midi_fixtures())
        if (smf::write_midi(smf::parse_midi(f)) != f) ++byte_failures;
    Rng rng(5150);
    int note_failures = 0;
    for (int i = 0; i < scores; ++i) {
        const auto notes = random_score(rng, rng.below(40));
        smf::ExportOptions opt;
        opt.ticks_per_quarter = static_cast<std::uint16_t>(24 + rng.below(960));
        const auto bytes = smf::write_midi(smf::build_document(notes, opt));
        if (smf::extract_notes(smf::parse_midi(bytes)).notes != notes) ++note_failures;
    }
    return {"MIDI codec round-trip", byte_failures == 0 && note_failures == 0,
            std::to_string(byte_failures) + " byte-level and " + std::to_string(note_failures) + " note-level failures"};
}

inline std::vector<CheckResult> run_all() {
    return {check_gradients(), check_regularizer(), check_viterbi(), check_midi_roundtrip()};
}

}  // namespace wordmelody::check

#endif  // WORDMELODY_CHECK_HPP
