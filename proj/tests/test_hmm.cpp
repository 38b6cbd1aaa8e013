#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "wordmelody/check.hpp"
#include "wordmelody/hmm.hpp"

using namespace wordmelody;
using hmm::HmmParams;
using hmm::StateId;

namespace {

using P = PartLabel;

corpus::MelodySample seg(int song, const char* chord, PartLabel part) {
    corpus::MelodySample s;
    s.song = song;
    s.chord = ChordSeqToken::parse(chord);
    s.part = part;
    return s;
}

ChordTable three_tokens() {
    return ChordTable({ChordSeqToken::parse("C-C"), ChordSeqToken::parse("F-G"), ChordSeqToken::parse("Am-Em")});
}

// Song 0: C-C/verse, F-G/verse, C-C/chorus, F-G/chorus
// Song 1: F-G/verse, Am-Em/bridge, F-G/chorus
// listed interleaved so grouping by song matters.
std::vector<corpus::MelodySample> two_songs() {
    return {seg(0, "C-C", P::Verse),  seg(1, "F-G", P::Verse),   seg(0, "F-G", P::Verse), seg(1, "Am-Em", P::Bridge),
            seg(0, "C-C", P::Chorus), seg(1, "F-G", P::Chorus), seg(0, "F-G", P::Chorus)};
}

void expect_near_all(const std::vector<double>& got, const std::vector<double>& want) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-15) << "entry " << i;
}

}  // namespace

TEST(HmmEstimate, SingleObservedTransition) {
    const ChordTable table({ChordSeqToken::parse("C-C"), ChordSeqToken::parse("F-G")});
    const auto p = hmm::estimate_params({seg(0, "C-C", P::Verse), seg(0, "F-G", P::Verse)}, table, 0.0);
    EXPECT_EQ(p.a(0, 1), 1.0);
    EXPECT_EQ(p.a(0, 0), 0.0);
    EXPECT_EQ(p.a(1, 0), 0.5);  // no outgoing counts: uniform
    EXPECT_EQ(p.pi, (std::vector<double>{1.0, 0.0}));
}

TEST(HmmEstimate, HandCountedTwoSongs) {
    const auto p = hmm::estimate_params(two_songs(), three_tokens(), 0.0);
    // Transitions: song 0 gives 0->1, 1->0, 0->1; song 1 gives 1->2, 2->1.
    expect_near_all(p.A, {0, 1, 0, 0.5, 0, 0.5, 0, 1, 0});
    expect_near_all(p.pi, {0.5, 0.5, 0});
    expect_near_all(p.B, {0.5, 0, 0.5, 0, 0.5, 0, 0.5, 0, 0, 0, 0, 1});
    expect_near_all(p.part_pi, {1, 0, 0, 0});
    // Part transitions: V->V, V->C, C->C, V->B, B->C. Pre-chorus row is empty.
    expect_near_all(p.part_A, {1.0 / 3, 0, 1.0 / 3, 1.0 / 3, 0.25, 0.25, 0.25, 0.25, 0, 0, 1, 0, 0, 0, 1, 0});
    p.validate();
}

TEST(HmmEstimate, HandCountedWithSmoothing) {
    const auto p = hmm::estimate_params(two_songs(), three_tokens(), 0.5);
    expect_near_all(p.A, {0.5 / 3.5, 2.5 / 3.5, 0.5 / 3.5, 1.5 / 3.5, 0.5 / 3.5, 1.5 / 3.5, 0.5 / 2.5, 1.5 / 2.5, 0.5 / 2.5});
    expect_near_all(p.pi, {1.5 / 3.5, 1.5 / 3.5, 0.5 / 3.5});
    p.validate();
}

TEST(HmmEstimate, SmoothingWithoutCountsIsUniform) {
    const auto p = hmm::estimate_params({seg(0, "C-C", P::Verse)}, three_tokens(), 0.01);
    for (StateId i = 0; i < 3; ++i)
        for (StateId j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(p.a(i, j), 1.0 / 3.0);
}

TEST(HmmEstimate, RowsStayStochastic) {
    const auto c = corpus::ingest_corpus(corpus::load_manifest(std::filesystem::path(WORDMELODY_CORPUS_DIR) / "manifest.json"));
    for (double smoothing : {0.0, 0.01, 1.0}) EXPECT_NO_THROW(hmm::estimate_params(c.samples, reference_chord_table(), smoothing).validate());
}

TEST(HmmSample, AbsorbingChain) {
    HmmParams p = check::worked_example_hmm();
    p.part_pi = {1, 0, 0, 0};
    p.part_A = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_EQ(hmm::sample_parts(p, 12, seed), std::vector<PartLabel>(12, P::Verse));
}

TEST(HmmSample, InitialFrequenciesMatchPartPi) {
    HmmParams p = check::worked_example_hmm();
    p.part_pi = {0.1, 0.2, 0.3, 0.4};
    std::vector<int> counts(4, 0);
    const int draws = 10000;
    for (int seed = 0; seed < draws; ++seed) ++counts[static_cast<std::size_t>(part_index(hmm::sample_parts(p, 1, static_cast<std::uint64_t>(seed))[0]))];
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(counts[i] / static_cast<double>(draws), p.part_pi[i], 0.02);
}

TEST(HmmSample, SeedDeterminism) {
    Rng rng(4);
    const auto p = check::random_hmm(3, rng);
    EXPECT_EQ(hmm::sample_parts(p, 20, 99), hmm::sample_parts(p, 20, 99));
}

TEST(HmmDecode, WorkedExample) {
    const auto p = check::worked_example_hmm();
    const std::vector<PartLabel> parts = {P::Verse, P::Chorus};
    const auto path = hmm::viterbi_chords(p, parts);
    EXPECT_EQ(path, (std::vector<StateId>{0, 1}));
    EXPECT_NEAR(hmm::joint_probability(p, parts, path), 0.6 * 0.8 * 0.3 * 0.7, 1e-12);
    EXPECT_NEAR(hmm::joint_probability(p, parts, path), 0.1008, 1e-12);
    EXPECT_EQ(hmm::brute_force_decode(p, parts), path);
    // The other three paths by hand.
    EXPECT_NEAR(hmm::joint_probability(p, parts, {0, 0}), 0.6 * 0.8 * 0.7 * 0.2, 1e-15);
    EXPECT_NEAR(hmm::joint_probability(p, parts, {1, 0}), 0.4 * 0.3 * 0.4 * 0.2, 1e-15);
    EXPECT_NEAR(hmm::joint_probability(p, parts, {1, 1}), 0.4 * 0.3 * 0.6 * 0.7, 1e-15);
}

TEST(HmmDecode, LengthOneCollapses) {
    const auto p = check::worked_example_hmm();
    EXPECT_NEAR(hmm::joint_probability(p, {P::Chorus}, {1}), 0.4 * 0.7, 1e-15);
}

TEST(HmmDecode, ZeroTransitionGivesZero) {
    auto p = check::worked_example_hmm();
    p.A = {1.0, 0.0, 0.4, 0.6};
    EXPECT_EQ(hmm::joint_probability(p, {P::Verse, P::Verse}, {0, 1}), 0.0);
}

TEST(HmmDecode, SingleStateGivesConstantPath) {
    HmmParams p;
    p.tokens.add(ChordSeqToken::parse("C-C"));
    p.pi = {1.0};
    p.A = {1.0};
    p.B = {0.25, 0.25, 0.25, 0.25};
    p.part_pi = {0.25, 0.25, 0.25, 0.25};
    p.part_A.assign(16, 0.25);
    const std::vector<PartLabel> parts = {P::Bridge, P::Verse, P::Chorus, P::PreChorus};
    EXPECT_EQ(hmm::viterbi_chords(p, parts), std::vector<StateId>(4, 0));
    EXPECT_EQ(hmm::brute_force_decode(p, parts), std::vector<StateId>(4, 0));
}

TEST(HmmDecode, UniformTiesGoToFirstPath) {
    HmmParams p;
    for (const char* t : {"C-C", "F-G", "Am-Em"}) p.tokens.add(ChordSeqToken::parse(t));
    p.pi.assign(3, 1.0 / 3);
    p.A.assign(9, 1.0 / 3);
    p.B.assign(12, 0.25);
    p.part_pi.assign(4, 0.25);
    p.part_A.assign(16, 0.25);
    const std::vector<PartLabel> parts(5, P::Verse);
    EXPECT_EQ(hmm::viterbi_chords(p, parts), std::vector<StateId>(5, 0));
    EXPECT_EQ(hmm::brute_force_decode(p, parts), std::vector<StateId>(5, 0));
}

TEST(HmmDecode, Errors) {
    const auto p = check::worked_example_hmm();
    EXPECT_THROW(hmm::viterbi_chords(p, {P::Verse, P::PreChorus}), DecodingError);
    EXPECT_THROW(hmm::viterbi_chords(p, {}), DecodingError);
    EXPECT_THROW(hmm::joint_probability(p, {P::Verse}, {0, 1}), Error);
    Rng rng(1);
    const auto big = check::random_hmm(4, rng);
    EXPECT_THROW(hmm::brute_force_decode(big, std::vector<PartLabel>(11, P::Verse)), Error);
    EXPECT_NO_THROW(hmm::brute_force_decode(big, std::vector<PartLabel>(9, P::Verse)));
}

TEST(HmmDecode, MatchesBruteForceOnRandomInstances) {
    Rng rng(2718);
    for (int i = 0; i < 300; ++i) {
        const std::size_t k = 1 + rng.below(4);
        const std::size_t n = 1 + rng.below(6);
        const auto p = check::random_hmm(k, rng);
        std::vector<PartLabel> parts;
        for (std::size_t t = 0; t < n; ++t) parts.push_back(part_from_index(static_cast<int>(rng.below(4))));
        const auto v = hmm::viterbi_chords(p, parts);
        ASSERT_EQ(v, hmm::brute_force_decode(p, parts)) << "instance " << i;

        // No enumerated path beats the Viterbi path.
        const double best = hmm::log_joint_probability(p, parts, v);
        std::vector<StateId> path(n, 0);
        while (true) {
            EXPECT_LE(hmm::log_joint_probability(p, parts, path), best);
            std::size_t t = 0;
            while (t < n && ++path[t] == k) path[t++] = 0;
            if (t == n) break;
        }
    }
}

TEST(HmmDecode, QuantizedParametersStayOptimalUnderTies) {
    // Coarse probabilities make exact ties common.
    Rng rng(55);
    int ties = 0;
    for (int i = 0; i < 200; ++i) {
        const std::size_t k = 2 + rng.below(3);
        HmmParams p = check::random_hmm(k, rng);
        auto coarse = [&](std::vector<double>& m, std::size_t rows, std::size_t cols) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] = 1.0 / static_cast<double>(cols);
            for (std::size_t r = 0; r < rows; ++r)
                if (rng.bernoulli(0.5)) {
                    const std::size_t a = rng.below(cols), b = rng.below(cols);
                    if (a != b) {
                        m[r * cols + a] += 0.5 / static_cast<double>(cols);
                        m[r * cols + b] -= 0.5 / static_cast<double>(cols);
                    }
                }
        };
        coarse(p.pi, 1, k);
        coarse(p.A, k, k);
        coarse(p.B, k, kPartCount);
        const std::size_t n = 1 + rng.below(5);
        std::vector<PartLabel> parts;
        for (std::size_t t = 0; t < n; ++t) parts.push_back(part_from_index(static_cast<int>(rng.below(4))));
        // Sums of logs that tie in exact arithmetic can differ by an ulp, so
        // compare scores with a tolerance and paths only when the optimum is
        // unique beyond it.
        const auto v = hmm::viterbi_chords(p, parts), b = hmm::brute_force_decode(p, parts);
        const double best = hmm::log_joint_probability(p, parts, b);
        EXPECT_NEAR(hmm::log_joint_probability(p, parts, v), best, 1e-9) << "instance " << i;
        std::size_t near_best = 0;
        std::vector<StateId> path(n, 0);
        while (true) {
            if (std::abs(hmm::log_joint_probability(p, parts, path) - best) <= 1e-9) ++near_best;
            std::size_t t = 0;
            while (t < n && ++path[t] == k) path[t++] = 0;
            if (t == n) break;
        }
        if (near_best == 1) {
            EXPECT_EQ(v, b) << "instance " << i;
        }
        ties += near_best > 1;
    }
    EXPECT_GT(ties, 20);
}

TEST(HmmPosterior, DrawsAreFeasibleAndSeeded) {
    const auto p = check::worked_example_hmm();
    const std::vector<PartLabel> parts = {P::Verse, P::Chorus, P::Chorus, P::Verse};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto path = hmm::sample_chords_posterior(p, parts, seed);
        EXPECT_GT(hmm::joint_probability(p, parts, path), 0.0);
        EXPECT_EQ(path, hmm::sample_chords_posterior(p, parts, seed));
    }
}

TEST(HmmPersistence, JsonRoundTrip) {
    Rng rng(8);
    const auto p = check::random_hmm(4, rng);
    const auto back = hmm::params_from_json(nlohmann::json::parse(hmm::params_to_json(p).dump()));
    EXPECT_EQ(back.tokens.tokens(), p.tokens.tokens());
    EXPECT_EQ(back.pi, p.pi);
    EXPECT_EQ(back.A, p.A);
    EXPECT_EQ(back.B, p.B);
    EXPECT_EQ(back.part_pi, p.part_pi);
    EXPECT_EQ(back.part_A, p.part_A);
}
