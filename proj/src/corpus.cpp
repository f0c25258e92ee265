#include "qgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "qgen/error.hpp"

namespace qgen {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

const char *speaker_tag(DialogueTurn::Speaker s) {
    return s == DialogueTurn::Speaker::user ? "user" : "bot";
}

} // namespace

std::string concat_history(const std::vector<DialogueTurn> &turns) {
    if (turns.empty()) throw ValidationError("concat_history: empty turn list");
    std::string out;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (i) out += kHistorySeparator;
        out += speaker_tag(turns[i].speaker);
        out += ": ";
        out += turns[i].text;
    }
    return out;
}

std::string context_id_for(const std::vector<DialogueTurn> &turns) {
    char buf[2 + 16 + 1];
    std::snprintf(buf, sizeof buf, "cx%016llx",
                  static_cast<unsigned long long>(fnv1a64(concat_history(turns))));
    return buf;
}

std::vector<DialogueExample> load_corpus(const std::filesystem::path &path, Split /*split*/) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus file: " + path.string());

    std::vector<DialogueExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        auto fail = [&](const std::string &what) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + what);
        };
        if (rec.is_discarded()) fail("invalid JSON");
        if (!rec.is_object() || !rec.contains("dialogue") || !rec["dialogue"].is_array() ||
            rec["dialogue"].empty())
            fail("record needs a non-empty \"dialogue\" array");
        if (!rec.contains("query") || !rec["query"].is_string())
            fail("record needs a string \"query\" field");

        DialogueExample ex;
        for (const auto &t : rec["dialogue"]) {
            if (!t.is_object() || !t.contains("speaker") || !t.contains("text"))
                fail("turn needs \"speaker\" and \"text\"");
            std::string sp = t["speaker"].get<std::string>();
            DialogueTurn turn;
            if (sp == "user")
                turn.speaker = DialogueTurn::Speaker::user;
            else if (sp == "bot")
                turn.speaker = DialogueTurn::Speaker::bot;
            else
                fail("speaker must be \"user\" or \"bot\", got \"" + sp + "\"");
            turn.text = trim(t["text"].get<std::string>());
            if (turn.text.empty())
                throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                      ": empty turn text");
            if (turn.text.find(trim(kHistorySeparator)) != std::string::npos)
                throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                      ": turn text contains the separator token");
            ex.turns.push_back(std::move(turn));
        }
        ex.gold_query = trim(rec["query"].get<std::string>());
        if (ex.gold_query.empty())
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": empty \"query\" field");
        ex.context_id = context_id_for(ex.turns);
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<EvalGroup> group_for_eval(const std::vector<DialogueExample> &examples) {
    std::vector<EvalGroup> groups;
    std::unordered_map<std::string, std::size_t> by_id;
    for (const auto &ex : examples) {
        auto [it, inserted] = by_id.emplace(ex.context_id, groups.size());
        if (inserted) {
            groups.push_back(EvalGroup{ex.context_id, ex.turns, {ex.gold_query}});
            continue;
        }
        auto &refs = groups[it->second].references;
        if (std::find(refs.begin(), refs.end(), ex.gold_query) == refs.end())
            refs.push_back(ex.gold_query);
    }
    return groups;
}

} // namespace qgen
