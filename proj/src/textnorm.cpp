#include "qgen/textnorm.hpp"

#include <array>
#include <cctype>
#include <fstream>

#include "qgen/error.hpp"

namespace qgen {

namespace {

// Frozen default stop-word list (en). Mirrored in data/stopwords_en.txt;
// a unit test keeps the two in sync.
constexpr const char *kStopwordsEn[] = {
    "a",       "about",  "above",   "after",  "again",   "all",    "am",      "an",
    "and",     "any",    "are",     "as",     "at",      "be",     "because", "been",
    "before",  "being",  "below",   "between","both",    "but",    "by",      "can",
    "could",   "did",    "do",      "does",   "doing",   "down",   "during",  "each",
    "few",     "for",    "from",    "further","had",     "has",    "have",    "having",
    "he",      "her",    "here",    "hers",   "him",     "his",    "how",     "i",
    "if",      "in",     "into",    "is",     "it",      "its",    "just",    "me",
    "more",    "most",   "my",      "no",     "nor",     "not",    "now",     "of",
    "off",     "on",     "once",    "only",   "or",      "other",  "our",     "ours",
    "out",     "over",   "own",     "same",   "she",     "should", "so",      "some",
    "such",    "than",   "that",    "the",    "their",   "theirs", "them",    "then",
    "there",   "these",  "they",    "this",   "those",   "through","to",      "too",
    "under",   "until",  "up",      "very",   "was",     "we",     "were",    "what",
    "when",    "where",  "which",   "while",  "who",     "whom",   "why",     "will",
    "with",    "would",  "you",     "your",   "yours",
};

// Frozen default stop-character list (zh). Mirrored in data/stopwords_zh.txt.
constexpr const char *kStopwordsZh[] = {
    "的", "了", "是", "我", "你", "他", "她", "它", "们", "在", "有", "和",
    "就", "不", "都", "一", "也", "很", "到", "要", "去", "会", "着", "没",
    "这", "那", "吗", "呢", "吧", "啊", "与", "及", "或", "被", "把", "让",
    "向", "从", "对", "于", "而", "且", "等", "之", "其", "个", "么", "什",
};

// Irregular forms the suffix rules would mangle. Mirrored in
// data/lemma_exceptions_en.txt. Right-hand sides are rule fixpoints.
constexpr std::array<std::pair<const char *, const char *>, 44> kLemmaExceptionsEn{{
    {"ate", "eat"},       {"bought", "buy"},    {"broke", "break"},   {"broken", "break"},
    {"came", "come"},     {"children", "child"},{"chose", "choose"},  {"chosen", "choose"},
    {"coming", "come"},   {"drove", "drive"},   {"driven", "drive"},  {"eaten", "eat"},
    {"feet", "foot"},     {"felt", "feel"},     {"found", "find"},    {"froze", "freeze"},
    {"frozen", "freeze"}, {"gave", "give"},     {"given", "give"},    {"giving", "give"},
    {"gone", "go"},       {"got", "get"},       {"having", "have"},   {"kept", "keep"},
    {"knew", "know"},     {"made", "make"},     {"making", "make"},   {"meant", "mean"},
    {"men", "man"},       {"mice", "mouse"},    {"movies", "movie"},  {"paid", "pay"},
    {"ran", "run"},       {"said", "say"},      {"saw", "see"},       {"sold", "sell"},
    {"spoke", "speak"},   {"spoken", "speak"},  {"taken", "take"},    {"taking", "take"},
    {"teeth", "tooth"},   {"told", "tell"},     {"using", "use"},     {"women", "woman"},
}};

bool is_ascii_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

bool all_punct(const std::string &tok) {
    for (char c : tok)
        if (!is_ascii_punct(c)) return false;
    return !tok.empty();
}

bool ends_with(const std::string &w, std::string_view suffix) {
    return w.size() >= suffix.size() &&
           w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// Undo consonant doubling left behind by -ing/-ed stripping ("stopp" -> "stop").
void undouble(std::string &w) {
    if (w.size() >= 3) {
        char a = w[w.size() - 1], b = w[w.size() - 2];
        if (a == b && !is_vowel(a) && a != 'l' && a != 's' && a != 'z') w.pop_back();
    }
}

// One rewrite pass; lemmatize() iterates this to a fixpoint.
bool apply_suffix_rules(std::string &w) {
    if (ends_with(w, "ies") && w.size() > 4) {
        w.replace(w.size() - 3, 3, "y");
        return true;
    }
    if (ends_with(w, "sses")) {
        w.erase(w.size() - 2);
        return true;
    }
    if (ends_with(w, "es") && w.size() > 3) {
        char prior = w[w.size() - 3];
        if (prior == 'x' || prior == 'z' || prior == 's' || prior == 'h') {
            w.erase(w.size() - 2);
            return true;
        }
    }
    if (ends_with(w, "s") && w.size() > 3 && !ends_with(w, "ss") && !ends_with(w, "us") &&
        !ends_with(w, "is")) {
        w.pop_back();
        return true;
    }
    if (ends_with(w, "ied") && w.size() > 4) {
        w.replace(w.size() - 3, 3, "y");
        return true;
    }
    if (ends_with(w, "ing") && w.size() > 5) {
        w.erase(w.size() - 3);
        undouble(w);
        return true;
    }
    if (ends_with(w, "ed") && w.size() > 4) {
        w.erase(w.size() - 2);
        undouble(w);
        return true;
    }
    return false;
}

std::unordered_set<std::string> default_stopwords(Lang lang) {
    std::unordered_set<std::string> out;
    if (lang == Lang::en)
        for (const char *w : kStopwordsEn) out.insert(w);
    else
        for (const char *w : kStopwordsZh) out.insert(w);
    return out;
}

std::unordered_map<std::string, std::string> default_exceptions(Lang lang) {
    std::unordered_map<std::string, std::string> out;
    if (lang == Lang::en)
        for (const auto &[k, v] : kLemmaExceptionsEn) out.emplace(k, v);
    return out;
}

std::size_t utf8_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1; // invalid byte: treat as a single unit
}

} // namespace

std::vector<std::string> surface_tokens(std::string_view text, Lang lang) {
    std::vector<std::string> out;
    if (lang == Lang::zh) {
        for (std::size_t i = 0; i < text.size();) {
            std::size_t n = utf8_len(static_cast<unsigned char>(text[i]));
            n = std::min(n, text.size() - i);
            std::string cp(text.substr(i, n));
            i += n;
            if (cp.size() == 1) {
                unsigned char c = static_cast<unsigned char>(cp[0]);
                if (std::isspace(c)) continue;
                if (std::isupper(c)) cp[0] = static_cast<char>(std::tolower(c));
            }
            out.push_back(std::move(cp));
        }
        return out;
    }
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (is_ascii_punct(ch)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::vector<std::string> word_tokens(std::string_view text, Lang lang) {
    std::vector<std::string> out = surface_tokens(text, lang);
    std::erase_if(out, all_punct);
    return out;
}

Normalizer::Normalizer(Lang lang, std::unordered_set<std::string> stopwords,
                       std::unordered_map<std::string, std::string> exceptions)
    : lang_(lang), stopwords_(std::move(stopwords)), lemma_exceptions_(std::move(exceptions)) {}

Normalizer Normalizer::english() {
    return Normalizer(Lang::en, default_stopwords(Lang::en), default_exceptions(Lang::en));
}

Normalizer Normalizer::chinese() {
    return Normalizer(Lang::zh, default_stopwords(Lang::zh), default_exceptions(Lang::zh));
}

Normalizer Normalizer::from_files(Lang lang, const std::filesystem::path &stopwords,
                                  const std::filesystem::path &lemma_exceptions) {
    auto read_lines = [](const std::filesystem::path &p) {
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open word-list file: " + p.string());
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) lines.push_back(line);
        }
        return lines;
    };
    std::unordered_set<std::string> stops;
    for (auto &l : read_lines(stopwords)) stops.insert(l);
    std::unordered_map<std::string, std::string> exc;
    if (!lemma_exceptions.empty()) {
        for (auto &l : read_lines(lemma_exceptions)) {
            auto tab = l.find('\t');
            if (tab == std::string::npos)
                throw ParseError("lemma-exception line missing <TAB>: " + l);
            exc.emplace(l.substr(0, tab), l.substr(tab + 1));
        }
    }
    return Normalizer(lang, std::move(stops), std::move(exc));
}

std::string Normalizer::lemmatize(const std::string &word) const {
    if (lang_ == Lang::zh) return word;
    std::string w = word;
    for (int iter = 0; iter < 32; ++iter) {
        auto it = lemma_exceptions_.find(w);
        if (it != lemma_exceptions_.end()) {
            w = it->second;
            continue;
        }
        if (!apply_suffix_rules(w)) break;
    }
    return w;
}

NormalizedTokens Normalizer::normalize(std::string_view text) const {
    NormalizedTokens out;
    std::vector<std::string> surface = surface_tokens(text, lang_);
    out.source_len = surface.size();
    for (auto &tok : surface) {
        if (all_punct(tok)) continue;
        if (stopwords_.count(tok)) continue;
        std::string lemma = lemmatize(tok);
        if (lemma.empty() || stopwords_.count(lemma)) continue;
        out.tokens.push_back(std::move(lemma));
    }
    return out;
}

} // namespace qgen
