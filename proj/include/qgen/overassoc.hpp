#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qgen/corpus.hpp"
#include "qgen/textnorm.hpp"

namespace qgen {

// d(q) = 1 - (#normalized query tokens contained in the normalized history
// token set) / (#normalized query tokens). Duplicate query tokens count
// separately; an empty normalized query yields 0.
double degree(std::string_view history, std::string_view query, const Normalizer &normalizer);

// 1 if d <= 1/3, 2 if 1/3 < d <= 2/3, 3 otherwise.
int bucket(double d);

struct DegreeReport {
    struct Entry {
        std::size_t index;
        double degree;
        int bucket;
    };
    std::vector<Entry> per_example;
    std::array<double, 3> bucket_shares{}; // sums to 1
    double bin_width = 0.05;
    std::vector<std::size_t> histogram; // counts over [0,1], last bin closed
};

DegreeReport corpus_report(const std::vector<DialogueExample> &examples,
                           const Normalizer &normalizer);

nlohmann::json report_to_json(const DegreeReport &report);

// Pearson product-moment correlation; requires length >= 2 and nonzero
// variance on both sides.
double pearson(std::span<const double> x, std::span<const double> y);

} // namespace qgen
