#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qgen {

enum class Split { train, dev, test };

struct DialogueTurn {
    enum class Speaker { user, bot };
    Speaker speaker;
    std::string text; // non-empty after trimming, free of the separator token
};

// One (dialogue history, gold query) pair. context_id is a stable hash of the
// concatenated history so grouping is reproducible across runs.
struct DialogueExample {
    std::string context_id;
    std::vector<DialogueTurn> turns;
    std::string gold_query;
};

// Merged evaluation unit: every gold query observed for one dialogue context.
struct EvalGroup {
    std::string context_id;
    std::vector<DialogueTurn> turns;
    std::vector<std::string> references; // deduplicated, order-stable
};

inline constexpr std::string_view kHistorySeparator = " <sep> ";

// "user: hello <sep> bot: hi"
std::string concat_history(const std::vector<DialogueTurn> &turns);

std::string context_id_for(const std::vector<DialogueTurn> &turns);

// JSONL loader; one {"dialogue": [...], "query": "..."} record per line.
std::vector<DialogueExample> load_corpus(const std::filesystem::path &path, Split split);

std::vector<EvalGroup> group_for_eval(const std::vector<DialogueExample> &examples);

} // namespace qgen
