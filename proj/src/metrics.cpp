#include "qgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "qgen/error.hpp"

namespace qgen {

namespace {

using Counts = std::unordered_map<std::string, long long>;

Counts ngram_counts(const std::vector<std::string> &tokens, int n) {
    Counts out;
    if (static_cast<int>(tokens.size()) < n) return out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int k = 1; k < n; ++k) {
            key += '\x1f';
            key += tokens[i + static_cast<std::size_t>(k)];
        }
        out[key]++;
    }
    return out;
}

long long clipped_overlap(const Counts &pred, const Counts &ref) {
    long long matched = 0;
    for (const auto &[key, cnt] : pred) {
        auto it = ref.find(key);
        if (it != ref.end()) matched += std::min(cnt, it->second);
    }
    return matched;
}

long long total_count(const Counts &c) {
    long long t = 0;
    for (const auto &[k, v] : c) t += v;
    return t;
}

double f1_from_overlap(long long overlap, long long pred_total, long long ref_total) {
    if (pred_total == 0 && ref_total == 0) return 1.0;
    if (pred_total == 0 || ref_total == 0 || overlap == 0) return 0.0;
    double p = static_cast<double>(overlap) / static_cast<double>(pred_total);
    double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
    return 2.0 * p * r / (p + r);
}

// Per-n BLEU statistics of one segment against multiple references.
struct SegmentStats {
    long long pred_len = 0;
    long long ref_len = 0;              // closest reference length
    long long matched[2] = {0, 0};      // clipped, max over references
    long long total[2] = {0, 0};
};

SegmentStats segment_stats(std::string_view prediction,
                           const std::vector<std::string> &references, Lang lang) {
    if (references.empty()) throw ValidationError("bleu: empty reference list");
    SegmentStats st;
    std::vector<std::string> pred = surface_tokens(prediction, lang);
    st.pred_len = static_cast<long long>(pred.size());

    long long best_diff = -1;
    std::vector<Counts> max_ref_counts(2);
    for (const auto &ref_text : references) {
        std::vector<std::string> ref = surface_tokens(ref_text, lang);
        long long rlen = static_cast<long long>(ref.size());
        long long diff = std::llabs(rlen - st.pred_len);
        if (best_diff < 0 || diff < best_diff || (diff == best_diff && rlen < st.ref_len)) {
            best_diff = diff;
            st.ref_len = rlen;
        }
        for (int n = 1; n <= 2; ++n)
            for (const auto &[key, cnt] : ngram_counts(ref, n)) {
                auto &slot = max_ref_counts[static_cast<std::size_t>(n - 1)][key];
                slot = std::max(slot, cnt);
            }
    }
    for (int n = 1; n <= 2; ++n) {
        Counts pc = ngram_counts(pred, n);
        st.total[n - 1] = total_count(pc);
        st.matched[n - 1] = clipped_overlap(pc, max_ref_counts[static_cast<std::size_t>(n - 1)]);
    }
    return st;
}

double bleu_from_stats(long long pred_len, long long ref_len, const long long matched[2],
                       const long long total[2], int max_n, bool smooth_bigram) {
    if (max_n < 1 || max_n > 2) throw ConfigError("bleu: max_n must be 1 or 2");
    if (pred_len == 0) return 0.0;
    double log_prec = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        double num = static_cast<double>(matched[n - 1]);
        double den = static_cast<double>(total[n - 1]);
        if (n == 2 && smooth_bigram) {
            num += 1.0;
            den += 1.0;
        }
        if (num <= 0.0 || den <= 0.0) return 0.0;
        log_prec += std::log(num / den);
    }
    double bp = pred_len < ref_len
                    ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(pred_len))
                    : 1.0;
    return 100.0 * bp * std::exp(log_prec / max_n);
}

} // namespace

nlohmann::json bundle_to_json(const ScoreBundle &b) {
    return {{"uni_f1", b.uni_f1}, {"bleu1", b.bleu1},   {"bleu2", b.bleu2},  {"sum", b.sum},
            {"rouge1", b.rouge1}, {"rouge2", b.rouge2}, {"rougeL", b.rougeL}};
}

double unigram_f1(std::string_view prediction, std::string_view reference,
                  const Normalizer &normalizer) {
    std::vector<std::string> pred = normalizer.normalize(prediction).tokens;
    std::vector<std::string> ref = normalizer.normalize(reference).tokens;
    Counts pc = ngram_counts(pred, 1), rc = ngram_counts(ref, 1);
    return f1_from_overlap(clipped_overlap(pc, rc), static_cast<long long>(pred.size()),
                           static_cast<long long>(ref.size()));
}

double bleu(std::string_view prediction, const std::vector<std::string> &references, int max_n,
            Lang lang, bool smooth_bigram) {
    SegmentStats st = segment_stats(prediction, references, lang);
    return bleu_from_stats(st.pred_len, st.ref_len, st.matched, st.total, max_n, smooth_bigram);
}

void BleuAccumulator::add(std::string_view prediction,
                          const std::vector<std::string> &references) {
    SegmentStats st = segment_stats(prediction, references, lang_);
    pred_len_ += st.pred_len;
    ref_len_ += st.ref_len;
    for (int n = 0; n < 2; ++n) {
        matched_[n] += st.matched[n];
        total_[n] += st.total[n];
    }
}

double BleuAccumulator::score(int max_n) const {
    return bleu_from_stats(pred_len_, ref_len_, matched_, total_, max_n, false);
}

double rouge(std::string_view prediction, std::string_view reference, RougeVariant variant,
             Lang lang) {
    std::vector<std::string> pred = surface_tokens(prediction, lang);
    std::vector<std::string> ref = surface_tokens(reference, lang);
    if (variant == RougeVariant::rL) {
        // LCS table over token sequences.
        std::size_t np = pred.size(), nr = ref.size();
        if (np == 0 && nr == 0) return 100.0;
        if (np == 0 || nr == 0) return 0.0;
        std::vector<std::size_t> prev(nr + 1, 0), cur(nr + 1, 0);
        for (std::size_t i = 1; i <= np; ++i) {
            for (std::size_t j = 1; j <= nr; ++j)
                cur[j] = pred[i - 1] == ref[j - 1] ? prev[j - 1] + 1
                                                   : std::max(prev[j], cur[j - 1]);
            std::swap(prev, cur);
        }
        long long lcs = static_cast<long long>(prev[nr]);
        return 100.0 * f1_from_overlap(lcs, static_cast<long long>(np),
                                       static_cast<long long>(nr));
    }
    int n = variant == RougeVariant::r1 ? 1 : 2;
    Counts pc = ngram_counts(pred, n), rc = ngram_counts(ref, n);
    return 100.0 * f1_from_overlap(clipped_overlap(pc, rc), total_count(pc), total_count(rc));
}

ScoreBundle evaluate_split(const std::map<std::string, std::string> &predictions,
                           const std::vector<EvalGroup> &groups, const Normalizer &normalizer) {
    if (groups.empty()) throw ValidationError("evaluate_split: no evaluation groups");
    std::string missing;
    for (const auto &g : groups)
        if (!predictions.count(g.context_id)) missing += " " + g.context_id;
    if (!missing.empty())
        throw ValidationError("evaluate_split: missing predictions for context_ids:" + missing);

    ScoreBundle out;
    BleuAccumulator acc(normalizer.lang());
    for (const auto &g : groups) {
        const std::string &pred = predictions.at(g.context_id);
        double best_f1 = 0, best_r1 = 0, best_r2 = 0, best_rl = 0;
        for (const auto &ref : g.references) {
            best_f1 = std::max(best_f1, unigram_f1(pred, ref, normalizer));
            best_r1 = std::max(best_r1, rouge(pred, ref, RougeVariant::r1, normalizer.lang()));
            best_r2 = std::max(best_r2, rouge(pred, ref, RougeVariant::r2, normalizer.lang()));
            best_rl = std::max(best_rl, rouge(pred, ref, RougeVariant::rL, normalizer.lang()));
        }
        out.uni_f1 += 100.0 * best_f1;
        out.rouge1 += best_r1;
        out.rouge2 += best_r2;
        out.rougeL += best_rl;
        acc.add(pred, g.references);
    }
    double n = static_cast<double>(groups.size());
    out.uni_f1 /= n;
    out.rouge1 /= n;
    out.rouge2 /= n;
    out.rougeL /= n;
    out.bleu1 = acc.score(1);
    out.bleu2 = acc.score(2);
    out.sum = out.uni_f1 + out.bleu1 + out.bleu2;
    return out;
}

ScoringFunction make_scoring_function(const std::string &name, const Normalizer &normalizer) {
    if (name == "uni_f1")
        return {name, [normalizer](const std::string &cand, const std::string &ref) {
                    return unigram_f1(cand, ref, normalizer);
                }};
    if (name == "bleu2") {
        Lang lang = normalizer.lang();
        return {name, [lang](const std::string &cand, const std::string &ref) {
                    return bleu(cand, {ref}, 2, lang, /*smooth_bigram=*/true) / 100.0;
                }};
    }
    throw ConfigError("unknown scoring function: \"" + name + "\" (expected uni_f1 or bleu2)");
}

} // namespace qgen
