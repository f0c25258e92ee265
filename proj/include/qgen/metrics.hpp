#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qgen/corpus.hpp"
#include "qgen/textnorm.hpp"

namespace qgen {

// All scores on a 0-100 scale; sum = uni_f1 + bleu1 + bleu2 exactly.
struct ScoreBundle {
    double uni_f1 = 0;
    double bleu1 = 0;
    double bleu2 = 0;
    double sum = 0;
    double rouge1 = 0;
    double rouge2 = 0;
    double rougeL = 0;
};

nlohmann::json bundle_to_json(const ScoreBundle &bundle);

// F1 over normalized-token multisets, in [0,1]. Both sides empty -> 1;
// exactly one side empty -> 0.
double unigram_f1(std::string_view prediction, std::string_view reference,
                  const Normalizer &normalizer);

// Sentence-level BLEU in [0,100]: geometric mean of modified n-gram
// precisions for n = 1..max_n times the brevity penalty. Multi-reference
// clipping uses max counts; reference length is the closest (shorter on
// ties). With smooth_bigram, add-one smoothing is applied to the bigram
// precision only.
double bleu(std::string_view prediction, const std::vector<std::string> &references, int max_n,
            Lang lang = Lang::en, bool smooth_bigram = false);

// Corpus-level BLEU: n-gram statistics summed over segments.
class BleuAccumulator {
  public:
    explicit BleuAccumulator(Lang lang = Lang::en) : lang_(lang) {}
    void add(std::string_view prediction, const std::vector<std::string> &references);
    double score(int max_n) const; // [0,100]

  private:
    Lang lang_;
    long long pred_len_ = 0;
    long long ref_len_ = 0;
    long long matched_[2] = {0, 0}; // n = 1, 2
    long long total_[2] = {0, 0};
};

enum class RougeVariant { r1, r2, rL };

// ROUGE-n F1 over n-gram overlap; ROUGE-L F1 from LCS lengths. [0,100].
double rouge(std::string_view prediction, std::string_view reference, RougeVariant variant,
             Lang lang = Lang::en);

// Multi-reference split evaluation. predictions keyed by context_id; every
// group must have a prediction. uni_f1 / rouge are means of per-group
// max-over-references; bleu1/2 are corpus-level multi-reference BLEU.
ScoreBundle evaluate_split(const std::map<std::string, std::string> &predictions,
                           const std::vector<EvalGroup> &groups, const Normalizer &normalizer);

// Deterministic [0,1] candidate-vs-reference scorer used as the wholeseq
// reward. score(x, x) = 1 for non-empty x.
struct ScoringFunction {
    std::string name;
    std::function<double(const std::string &, const std::string &)> score;
};

// name in {"uni_f1", "bleu2"}; anything else is a configuration error.
ScoringFunction make_scoring_function(const std::string &name, const Normalizer &normalizer);

} // namespace qgen
