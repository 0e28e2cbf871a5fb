#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace morphlab {

// A rate kept as the exact pair (count, total) so metric comparisons against
// enumeration oracles can be done in integer arithmetic; rate() is the
// floating-point view for reporting.
struct RateResult {
    std::size_t count = 0;
    std::size_t total = 0;

    double rate() const { return total == 0 ? 0.0 : double(count) / double(total); }
    bool operator==(const RateResult&) const = default;
};

// One morphed probe scored against both contributing subjects.
struct MorphTrial {
    std::string id;
    double sim1 = 0.0;
    double sim2 = 0.0;
};

// One demorphing attempt: similarity of the restored image to the hidden
// subject (sim_b2) and to the reference subject (sim_b1).
struct DemorphTrial {
    std::string id;
    double sim_b2 = 0.0;
    double sim_b1 = 0.0;
};

// Smallest threshold tau drawn from the scores (falling back to +infinity)
// such that the fraction of non-mated scores >= tau stays within target_fmr.
// A similarity >= tau counts as a match everywhere in this module.
double fmr_threshold(const std::vector<double>& non_mated, double target_fmr = 0.001);

// Fraction of morph trials matching BOTH contributing subjects at tau.
RateResult mmpmr(const std::vector<MorphTrial>& trials, double tau);

// Detection rates; detector scores are "higher = more morph-like" and a score
// >= tau classifies the sample as a morph.
RateResult apcer(const std::vector<double>& attack_scores, double tau);
RateResult bpcer(const std::vector<double>& bona_fide_scores, double tau);

struct DEerResult {
    RateResult rate;      // (APCER + BPCER) / 2 at the chosen threshold
    double threshold = 0; // threshold where |APCER - BPCER| is smallest
};

// Sweeps the union of both score sets (plus a +infinity sentinel) and picks
// the threshold minimizing |APCER - BPCER|, smaller threshold on ties.
DEerResult d_eer(const std::vector<double>& attack_scores,
                 const std::vector<double>& bona_fide_scores);

// Mean of two rates, both required to lie in [0, 1].
double acer(double apcer_rate, double bpcer_rate);

// Fraction of all samples classified correctly at tau.
RateResult accuracy(const std::vector<double>& attack_scores,
                    const std::vector<double>& bona_fide_scores, double tau);

// Fraction of demorph trials whose restored image matches the hidden subject
// but not the reference: sim_b2 >= tau and sim_b1 < tau.
RateResult demorph_accuracy(const std::vector<DemorphTrial>& trials, double tau);

} // namespace morphlab
