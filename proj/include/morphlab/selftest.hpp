#pragma once

#include <ostream>

namespace morphlab {

// Runs the curated deterministic self-check suites (gradients, closed forms,
// metric examples, morph algebra, persistence round-trips), printing one
// [ok]/[fail] line per suite. Returns the number of failed suites.
int run_selftest(std::ostream& out);

} // namespace morphlab
