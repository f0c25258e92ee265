#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace qgen {

enum class Lang { en, zh };

// Content tokens of a text after stop-word/punctuation removal and
// lemmatization. source_len counts surface tokens before filtering.
struct NormalizedTokens {
    std::vector<std::string> tokens;
    std::size_t source_len = 0;
};

// Surface tokenization shared by the metrics and the word-level model:
// lowercase, punctuation split into standalone tokens, whitespace separated.
// For zh every non-space codepoint is its own token.
std::vector<std::string> surface_tokens(std::string_view text, Lang lang);

// Same as surface_tokens but with punctuation-only tokens dropped.
std::vector<std::string> word_tokens(std::string_view text, Lang lang);

// Deterministic normalizer: frozen stop-word list plus a rule-and-exception
// lemmatizer for English; character tokens with identity lemmas for Chinese.
// Stateless after construction, shareable across threads.
class Normalizer {
  public:
    static Normalizer english();
    static Normalizer chinese();
    static Normalizer from_files(Lang lang, const std::filesystem::path &stopwords,
                                 const std::filesystem::path &lemma_exceptions);

    NormalizedTokens normalize(std::string_view text) const;

    // Idempotent: lemmatize(lemmatize(w)) == lemmatize(w).
    std::string lemmatize(const std::string &word) const;

    Lang lang() const { return lang_; }
    const std::unordered_set<std::string> &stopwords() const { return stopwords_; }

  private:
    Normalizer(Lang lang, std::unordered_set<std::string> stopwords,
               std::unordered_map<std::string, std::string> exceptions);

    Lang lang_;
    std::unordered_set<std::string> stopwords_;
    std::unordered_map<std::string, std::string> lemma_exceptions_;
};

} // namespace qgen
