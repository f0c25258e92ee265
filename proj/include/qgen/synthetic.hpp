#pragma once

#include <cstdint>
#include <vector>

#include "qgen/corpus.hpp"

namespace qgen {

// Seeded grammar with a controllable over-association knob: it emits
// (history, faithful query) pairs and, with probability rho, replaces half or
// all of the query tokens with distractor words that never occur in any
// history. Degrees land on {0, 0.5, 1}, i.e. buckets 1/2/3.
struct SyntheticConfig {
    int n_train = 2000;
    int n_dev = 300;
    double rho = 0.3;
    std::uint64_t seed = 1;
    int n_topics = 40;
    int n_fillers = 12;
    int n_distractors = 24;
};

struct SyntheticCorpus {
    std::vector<DialogueExample> train;
    std::vector<DialogueExample> dev;
};

SyntheticCorpus make_synthetic(const SyntheticConfig &config);

} // namespace qgen
