#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "morphlab/biometrics.hpp"
#include "morphlab/errors.hpp"
#include "morphlab/tensor.hpp"

using namespace morphlab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// --- independent enumeration oracles -------------------------------------

double oracle_fmr(const std::vector<double>& scores, double target) {
    double best = kInf;
    for (double cand : scores) {
        std::size_t hits = 0;
        for (double s : scores)
            if (s >= cand) ++hits;
        if (double(hits) / double(scores.size()) <= target) best = std::min(best, cand);
    }
    return best;
}

std::size_t oracle_count_matches(const std::vector<MorphTrial>& trials, double tau) {
    std::size_t hits = 0;
    for (const MorphTrial& t : trials)
        if (t.sim1 >= tau && t.sim2 >= tau) ++hits;
    return hits;
}

struct OracleEer {
    std::size_t ca = 0, cb = 0;
    double tau = 0.0;
};

OracleEer oracle_eer(const std::vector<double>& attack, const std::vector<double>& bona) {
    std::vector<double> grid;
    for (double s : attack) grid.push_back(s);
    for (double s : bona) grid.push_back(s);
    grid.push_back(kInf);
    std::sort(grid.begin(), grid.end());

    const long long na = (long long)attack.size(), nb = (long long)bona.size();
    OracleEer best;
    long long best_gap = -1;
    for (double tau : grid) {
        long long ca = 0, cb = 0;
        for (double s : attack) ca += (s < tau);
        for (double s : bona) cb += (s >= tau);
        const long long gap = std::llabs(ca * nb - cb * na);
        if (best_gap < 0 || gap < best_gap || (gap == best_gap && tau < best.tau)) {
            best_gap = gap;
            best = {std::size_t(ca), std::size_t(cb), tau};
        }
    }
    return best;
}

std::vector<double> random_scores(Rng& rng, std::size_t n, bool gridded) {
    std::vector<double> s(n);
    for (double& v : s)
        v = gridded ? std::floor(rng.uniform(0.0, 11.0)) / 10.0 : rng.uniform(-2.0, 2.0);
    return s;
}

} // namespace

// ---------------------------------------------------------------------------
// threshold from the false-match rate

TEST_CASE("fmr threshold: pinned examples") {
    const std::vector<double> decade{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    CHECK(fmr_threshold(decade, 0.10) == 1.0);

    // a permissive target admits every score, so the smallest wins
    CHECK(fmr_threshold(decade, 1.0) == 0.1);
    CHECK(fmr_threshold(decade, 2.5) == 0.1);

    // indistinguishable scores admit no finite threshold
    const std::vector<double> flat{0.4, 0.4, 0.4};
    CHECK(std::isinf(fmr_threshold(flat, 0.5)));

    CHECK_THROWS_AS(fmr_threshold({}, 0.1), NoDataError);
    CHECK_THROWS_AS(fmr_threshold(decade, 0.0), ConfigError);
    CHECK_THROWS_AS(fmr_threshold(decade, -0.5), ConfigError);
    CHECK_THROWS_AS(fmr_threshold({0.1, kInf}, 0.1), ValueError);
}

TEST_CASE("fmr threshold: always the smallest admissible candidate") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + std::size_t(rng.uniform(0.0, 60.0));
        const std::vector<double> s = random_scores(rng, n, trial % 2 == 0);
        const double target = rng.uniform(0.01, 0.6);
        const double tau = fmr_threshold(s, target);
        CHECK(tau == oracle_fmr(s, target));
        if (std::isfinite(tau)) {
            std::size_t hits = 0;
            for (double v : s) hits += (v >= tau);
            CHECK(double(hits) / double(n) <= target);
        }
    }
}

// ---------------------------------------------------------------------------
// morph match rate

TEST_CASE("mmpmr: pinned example and threshold extremes") {
    const std::vector<MorphTrial> trials{
        {"a", 0.7, 0.6}, {"b", 0.8, 0.4}, {"c", 0.55, 0.9}};
    const RateResult r = mmpmr(trials, 0.5);
    CHECK(r.count == 2);
    CHECK(r.total == 3);
    CHECK(r.rate() == doctest::Approx(2.0 / 3.0));

    CHECK(mmpmr(trials, -kInf).count == 3);
    CHECK(mmpmr(trials, 2.0).count == 0);
    CHECK_THROWS_AS(mmpmr({}, 0.5), NoDataError);
    CHECK_THROWS_AS(mmpmr({{"x", 0.5, kInf}}, 0.5), ValueError);
}

TEST_CASE("mmpmr: non-increasing in the threshold") {
    Rng rng(12);
    std::vector<MorphTrial> trials;
    for (int i = 0; i < 40; ++i)
        trials.push_back({"t", rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)});
    std::size_t prev = trials.size() + 1;
    for (double tau = -0.1; tau <= 1.1; tau += 0.05) {
        const RateResult r = mmpmr(trials, tau);
        CHECK(r.count <= prev);
        CHECK(r.count == oracle_count_matches(trials, tau));
        prev = r.count;
    }
}

// ---------------------------------------------------------------------------
// detection error rates

TEST_CASE("apcer and bpcer: pinned examples, extremes, exact partition") {
    const std::vector<double> attack{0.2, 0.6, 0.9};
    const std::vector<double> bona{0.1, 0.3};

    const RateResult a = apcer(attack, 0.5);
    CHECK(a.count == 1);
    CHECK(a.total == 3);
    const RateResult b = bpcer(bona, 0.5);
    CHECK(b.count == 0);
    CHECK(b.total == 2);

    // separated groups with a threshold between them
    CHECK(apcer({0.8, 0.9}, 0.5).count == 0);
    CHECK(bpcer({0.1, 0.2}, 0.5).count == 0);

    // threshold at or below every score
    CHECK(apcer(attack, 0.1).count == 0);
    CHECK(bpcer(bona, 0.1).count == 2);

    CHECK_THROWS_AS(apcer({}, 0.5), NoDataError);
    CHECK_THROWS_AS(bpcer({}, 0.5), NoDataError);

    // the attack set partitions exactly at any threshold
    Rng rng(13);
    const std::vector<double> s = random_scores(rng, 33, true);
    for (double tau : {-1.0, 0.0, 0.35, 0.5, 0.95, 2.0}) {
        std::size_t below = apcer(s, tau).count;
        std::size_t at_least = 0;
        for (double v : s) at_least += (v >= tau);
        CHECK(below + at_least == s.size());
    }
}

TEST_CASE("raising the threshold only misses more attacks and flags fewer bona fide") {
    Rng rng(14);
    const std::vector<double> s = random_scores(rng, 50, true);
    std::size_t prev_a = 0, prev_b = s.size();
    for (double tau = -0.2; tau <= 1.2; tau += 0.04) {
        const std::size_t a = apcer(s, tau).count; // scores < tau can only grow
        const std::size_t b = bpcer(s, tau).count; // scores >= tau can only shrink
        CHECK(a >= prev_a);
        CHECK(b <= prev_b);
        prev_a = a;
        prev_b = b;
    }
    CHECK(apcer(s, 2.0).count == s.size());
    CHECK(bpcer(s, 2.0).count == 0);
}

// ---------------------------------------------------------------------------
// detection equal error rate

TEST_CASE("d-eer: pinned examples") {
    // perfectly separated: zero error at the smallest separating candidate
    const DEerResult sep = d_eer({0.9, 0.8}, {0.1, 0.2});
    CHECK(sep.rate.count == 0);
    CHECK(sep.threshold == 0.8);

    // identical multisets: both rates meet at one half
    const std::vector<double> same{0.2, 0.4, 0.6, 0.8};
    const DEerResult mid = d_eer(same, same);
    CHECK(mid.rate.rate() == 0.5);

    CHECK_THROWS_AS(d_eer({}, {0.1}), NoDataError);
    CHECK_THROWS_AS(d_eer({0.1}, {}), NoDataError);
}

TEST_CASE("d-eer: matches the enumeration oracle and survives monotone rescaling") {
    Rng rng(15);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t na = 1 + std::size_t(rng.uniform(0.0, 40.0));
        const std::size_t nb = 1 + std::size_t(rng.uniform(0.0, 40.0));
        const bool grid = trial % 2 == 0;
        const std::vector<double> attack = random_scores(rng, na, grid);
        const std::vector<double> bona = random_scores(rng, nb, grid);

        const DEerResult got = d_eer(attack, bona);
        const OracleEer want = oracle_eer(attack, bona);
        CHECK(got.threshold == want.tau);
        CHECK(got.rate.count == want.ca * nb + want.cb * na);
        CHECK(got.rate.total == 2 * na * nb);

        // strictly increasing transforms preserve the rate and map the threshold
        auto transformed = [&](auto f) {
            std::vector<double> ta, tb;
            for (double s : attack) ta.push_back(f(s));
            for (double s : bona) tb.push_back(f(s));
            return d_eer(ta, tb);
        };
        const DEerResult ex = transformed([](double s) { return std::exp(s); });
        CHECK(ex.rate == got.rate);
        CHECK(ex.threshold == std::exp(got.threshold));
        const DEerResult aff = transformed([](double s) { return 2.0 * s + 1.0; });
        CHECK(aff.rate == got.rate);
        CHECK(aff.threshold == 2.0 * got.threshold + 1.0);
    }
}

// ---------------------------------------------------------------------------
// summary metrics

TEST_CASE("acer and accuracy: pinned examples") {
    CHECK(acer(0.0, 0.0) == 0.0);
    CHECK(acer(0.2, 0.4) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK_THROWS_AS(acer(-0.1, 0.5), ConfigError);
    CHECK_THROWS_AS(acer(0.5, 1.2), ConfigError);

    const RateResult acc = accuracy({0.2, 0.6, 0.9}, {0.1, 0.3}, 0.5);
    CHECK(acc.count == 4);
    CHECK(acc.total == 5);
    CHECK(acc.rate() == doctest::Approx(0.8));
    CHECK_THROWS_AS(accuracy({}, {}, 0.5), NoDataError);
}

TEST_CASE("demorph accuracy: pinned examples") {
    CHECK(demorph_accuracy({{"a", 0.9, 0.1}}, 0.5).count == 1);
    CHECK(demorph_accuracy({{"a", 0.9, 0.9}}, 0.5).count == 0);

    const std::vector<DemorphTrial> trials{
        {"a", 0.9, 0.1}, {"b", 0.9, 0.9}, {"c", 0.2, 0.1}};
    const RateResult r = demorph_accuracy(trials, 0.5);
    CHECK(r.count == 1);
    CHECK(r.total == 3);
    CHECK_THROWS_AS(demorph_accuracy({}, 0.5), NoDataError);
    CHECK_THROWS_AS(demorph_accuracy({{"x", kInf, 0.0}}, 0.5), ValueError);
}

// ---------------------------------------------------------------------------
// randomized oracle sweep across every metric

TEST_CASE("all metrics agree with brute-force enumeration on random tables") {
    Rng rng(16);
    for (int trial = 0; trial < 60; ++trial) {
        const bool grid = trial % 3 != 0;
        const std::size_t na = 1 + std::size_t(rng.uniform(0.0, 99.0));
        const std::size_t nb = 1 + std::size_t(rng.uniform(0.0, 99.0));
        const std::vector<double> attack = random_scores(rng, na, grid);
        const std::vector<double> bona = random_scores(rng, nb, grid);
        const double tau = grid ? std::floor(rng.uniform(0.0, 11.0)) / 10.0
                                : rng.uniform(-2.0, 2.0);

        std::size_t want_a = 0, want_b = 0, want_acc = 0;
        for (double s : attack) {
            want_a += (s < tau);
            want_acc += (s >= tau);
        }
        for (double s : bona) {
            want_b += (s >= tau);
            want_acc += (s < tau);
        }
        CHECK(apcer(attack, tau).count == want_a);
        CHECK(bpcer(bona, tau).count == want_b);
        CHECK(accuracy(attack, bona, tau).count == want_acc);

        const double target = rng.uniform(0.01, 0.9);
        CHECK(fmr_threshold(bona, target) == oracle_fmr(bona, target));

        std::vector<MorphTrial> trials;
        for (std::size_t i = 0; i < na; ++i)
            trials.push_back({"m", attack[i], bona[i % nb]});
        CHECK(mmpmr(trials, tau).count == oracle_count_matches(trials, tau));

        const DEerResult got = d_eer(attack, bona);
        const OracleEer want = oracle_eer(attack, bona);
        CHECK(got.threshold == want.tau);
        CHECK(got.rate.count == want.ca * nb + want.cb * na);
    }
}
