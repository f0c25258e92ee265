#include "qgen/overassoc.hpp"

#include <cmath>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "qgen/error.hpp"

namespace qgen {

double degree(std::string_view history, std::string_view query, const Normalizer &normalizer) {
    NormalizedTokens q = normalizer.normalize(query);
    if (q.tokens.empty()) return 0.0;
    NormalizedTokens h = normalizer.normalize(history);
    std::unordered_set<std::string> hist_set(h.tokens.begin(), h.tokens.end());
    std::size_t contained = 0;
    for (const auto &tok : q.tokens)
        if (hist_set.count(tok)) ++contained;
    // (m - contained)/m rather than 1 - contained/m: keeps exact thirds exact,
    // so boundary degrees like 1/3 land in the right bucket.
    return static_cast<double>(q.tokens.size() - contained) /
           static_cast<double>(q.tokens.size());
}

int bucket(double d) {
    if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("bucket: degree out of [0,1]");
    if (d <= 1.0 / 3.0) return 1;
    if (d <= 2.0 / 3.0) return 2;
    return 3;
}

DegreeReport corpus_report(const std::vector<DialogueExample> &examples,
                           const Normalizer &normalizer) {
    if (examples.empty()) throw ValidationError("corpus_report: empty corpus");
    DegreeReport report;
    report.histogram.assign(static_cast<std::size_t>(std::lround(1.0 / report.bin_width)), 0);
    std::array<std::size_t, 3> counts{};
    for (std::size_t i = 0; i < examples.size(); ++i) {
        double d = degree(concat_history(examples[i].turns), examples[i].gold_query, normalizer);
        int b = bucket(d);
        counts[static_cast<std::size_t>(b - 1)]++;
        std::size_t bin = std::min(static_cast<std::size_t>(d / report.bin_width),
                                   report.histogram.size() - 1);
        report.histogram[bin]++;
        report.per_example.push_back({i, d, b});
    }
    for (int b = 0; b < 3; ++b)
        report.bucket_shares[static_cast<std::size_t>(b)] =
            static_cast<double>(counts[static_cast<std::size_t>(b)]) /
            static_cast<double>(examples.size());
    return report;
}

nlohmann::json report_to_json(const DegreeReport &report) {
    nlohmann::json j;
    j["bucket_shares"] = report.bucket_shares;
    j["histogram"]["bin_width"] = report.bin_width;
    j["histogram"]["counts"] = report.histogram;
    auto &per = j["per_example"] = nlohmann::json::array();
    for (const auto &e : report.per_example)
        per.push_back({{"index", e.index}, {"degree", e.degree}, {"bucket", e.bucket}});
    return j;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ValidationError("pearson: need equal-length inputs with >= 2 points");
    double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw ValidationError("pearson: undefined correlation (zero variance)");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace qgen
