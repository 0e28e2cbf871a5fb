#include "morphlab/biometrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "morphlab/errors.hpp"

namespace morphlab {

namespace {

void check_finite_scores(const std::vector<double>& scores, const char* what) {
    for (double s : scores)
        if (!std::isfinite(s)) throw ValueError(std::string(what) + ": non-finite score");
}

void check_nonempty(std::size_t n, const char* what) {
    if (n == 0) throw NoDataError(std::string(what) + ": no scores provided");
}

std::size_t count_at_least(const std::vector<double>& scores, double tau) {
    std::size_t n = 0;
    for (double s : scores) n += (s >= tau);
    return n;
}

std::size_t count_below(const std::vector<double>& scores, double tau) {
    std::size_t n = 0;
    for (double s : scores) n += (s < tau);
    return n;
}

} // namespace

double fmr_threshold(const std::vector<double>& non_mated, double target_fmr) {
    check_nonempty(non_mated.size(), "fmr_threshold");
    check_finite_scores(non_mated, "fmr_threshold");
    if (!(target_fmr > 0.0) || !std::isfinite(target_fmr))
        throw ConfigError("fmr_threshold: target FMR must be a positive finite rate");

    std::vector<double> candidates = non_mated;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const double n = double(non_mated.size());
    for (double tau : candidates)
        if (double(count_at_least(non_mated, tau)) / n <= target_fmr) return tau;
    return std::numeric_limits<double>::infinity();
}

RateResult mmpmr(const std::vector<MorphTrial>& trials, double tau) {
    check_nonempty(trials.size(), "mmpmr");
    RateResult r{0, trials.size()};
    for (const MorphTrial& t : trials) {
        if (!std::isfinite(t.sim1) || !std::isfinite(t.sim2))
            throw ValueError("mmpmr: non-finite similarity");
        r.count += (std::min(t.sim1, t.sim2) >= tau);
    }
    return r;
}

RateResult apcer(const std::vector<double>& attack_scores, double tau) {
    check_nonempty(attack_scores.size(), "apcer");
    check_finite_scores(attack_scores, "apcer");
    return {count_below(attack_scores, tau), attack_scores.size()};
}

RateResult bpcer(const std::vector<double>& bona_fide_scores, double tau) {
    check_nonempty(bona_fide_scores.size(), "bpcer");
    check_finite_scores(bona_fide_scores, "bpcer");
    return {count_at_least(bona_fide_scores, tau), bona_fide_scores.size()};
}

DEerResult d_eer(const std::vector<double>& attack_scores,
                 const std::vector<double>& bona_fide_scores) {
    check_nonempty(attack_scores.size(), "d_eer");
    check_nonempty(bona_fide_scores.size(), "d_eer");
    check_finite_scores(attack_scores, "d_eer");
    check_finite_scores(bona_fide_scores, "d_eer");

    std::vector<double> grid = attack_scores;
    grid.insert(grid.end(), bona_fide_scores.begin(), bona_fide_scores.end());
    grid.push_back(std::numeric_limits<double>::infinity());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    const std::size_t na = attack_scores.size(), nb = bona_fide_scores.size();
    bool found = false;
    long long best_gap = 0;
    std::size_t best_a = 0, best_b = 0;
    double best_tau = 0.0;
    for (double tau : grid) {
        const std::size_t ca = count_below(attack_scores, tau);
        const std::size_t cb = count_at_least(bona_fide_scores, tau);
        // |ca/na - cb/nb| compared exactly over the common denominator na*nb
        const long long gap = std::llabs(static_cast<long long>(ca * nb) -
                                         static_cast<long long>(cb * na));
        if (!found || gap < best_gap) {
            found = true;
            best_gap = gap;
            best_a = ca;
            best_b = cb;
            best_tau = tau;
        }
    }

    DEerResult out;
    // (ca/na + cb/nb) / 2 over the common denominator 2*na*nb
    out.rate = {best_a * nb + best_b * na, 2 * na * nb};
    out.threshold = best_tau;
    return out;
}

double acer(double apcer_rate, double bpcer_rate) {
    if (!(apcer_rate >= 0.0) || !(apcer_rate <= 1.0) || !(bpcer_rate >= 0.0) ||
        !(bpcer_rate <= 1.0))
        throw ConfigError("acer: rates must lie in [0, 1]");
    return 0.5 * (apcer_rate + bpcer_rate);
}

RateResult accuracy(const std::vector<double>& attack_scores,
                    const std::vector<double>& bona_fide_scores, double tau) {
    check_nonempty(attack_scores.size() + bona_fide_scores.size(), "accuracy");
    check_finite_scores(attack_scores, "accuracy");
    check_finite_scores(bona_fide_scores, "accuracy");
    return {count_at_least(attack_scores, tau) + count_below(bona_fide_scores, tau),
            attack_scores.size() + bona_fide_scores.size()};
}

RateResult demorph_accuracy(const std::vector<DemorphTrial>& trials, double tau) {
    check_nonempty(trials.size(), "demorph_accuracy");
    RateResult r{0, trials.size()};
    for (const DemorphTrial& t : trials) {
        if (!std::isfinite(t.sim_b2) || !std::isfinite(t.sim_b1))
            throw ValueError("demorph_accuracy: non-finite similarity");
        r.count += (t.sim_b2 >= tau && t.sim_b1 < tau);
    }
    return r;
}

} // namespace morphlab
