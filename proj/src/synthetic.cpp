#include "qgen/synthetic.hpp"

#include <random>
#include <algorithm>
#include <cmath>
#include <string>

#include "qgen/error.hpp"

namespace qgen {

namespace {

// Fake but pronounceable words that are fixpoints of the English lemmatizer
// (they never end in s/d/g and carry no rule suffix).
std::string make_word(char category, int i) {
    static constexpr char vowels[] = "aeiou";
    static constexpr char cons[] = "bcfklmnprtvz";
    static constexpr char tail[] = "bkmnprtv";
    std::string w;
    w += category;
    w += vowels[i % 5];
    w += cons[(i / 5) % 12];
    w += vowels[(i / 60) % 5];
    w += tail[(i / 300) % 8];
    return w;
}

int draw(std::mt19937_64 &rng, int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); }

// Annotators with an over-association habit do not corrupt uniformly: certain
// topics systematically attract out-of-context queries. A fixed 40% of topics
// are "prone" and absorb as much of the injection budget rho as possible; the
// distractor for a topic is a deterministic function of the topic, so the
// corruption is a learnable (and therefore harmful) signal rather than
// averaged-out noise.
constexpr double kProneShare = 0.4;
bool topic_prone(int t) { return t % 5 < 2; } // 2 of every 5 topics

double corruption_prob(int t, double rho) {
    double prone = std::min(1.0, rho / kProneShare);
    double rest = std::max(0.0, (rho - kProneShare * prone) / (1.0 - kProneShare));
    return topic_prone(t) ? prone : rest;
}

DialogueExample make_example(std::mt19937_64 &rng, const SyntheticConfig &cfg,
                             const std::vector<std::string> &topics,
                             const std::vector<std::string> &fillers,
                             const std::vector<std::string> &distractors) {
    int t1 = draw(rng, cfg.n_topics);
    int t2 = draw(rng, cfg.n_topics - 1);
    if (t2 >= t1) ++t2;
    const std::string &f1 = fillers[static_cast<std::size_t>(draw(rng, cfg.n_fillers))];
    const std::string &f2 = fillers[static_cast<std::size_t>(draw(rng, cfg.n_fillers))];

    DialogueExample ex;
    ex.turns.push_back({DialogueTurn::Speaker::user,
                        "tell me about " + topics[static_cast<std::size_t>(t1)] + " and " + f1});
    ex.turns.push_back({DialogueTurn::Speaker::bot,
                        f2 + " yes and " + topics[static_cast<std::size_t>(t2)] + " too"});

    std::string q1 = topics[static_cast<std::size_t>(t1)];
    std::string q2 = topics[static_cast<std::size_t>(t2)];
    double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    if (u < corruption_prob(t2, cfg.rho)) {
        // injected over-association: half or all of the query becomes
        // distractor words absent from every history; full replacement
        // dominates so most of the corruption lands in the top degree bucket
        double u2 = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
        bool full = u2 < 0.75;
        q2 = distractors[static_cast<std::size_t>(t2 % cfg.n_distractors)];
        if (full) q1 = distractors[static_cast<std::size_t>((t1 + 1) % cfg.n_distractors)];
    }
    ex.gold_query = q1 + " " + q2;
    ex.context_id = context_id_for(ex.turns);
    return ex;
}

} // namespace

SyntheticCorpus make_synthetic(const SyntheticConfig &cfg) {
    if (cfg.n_train < 1 || cfg.n_dev < 1) throw ConfigError("make_synthetic: empty split sizes");
    if (cfg.rho < 0 || cfg.rho > 1) throw ConfigError("make_synthetic: rho out of [0,1]");
    if (cfg.n_topics < 2 || cfg.n_topics > 300 || cfg.n_fillers < 1 || cfg.n_fillers > 300 ||
        cfg.n_distractors < 1 || cfg.n_distractors > 300)
        throw ConfigError("make_synthetic: vocabulary sizes out of range");

    std::vector<std::string> topics, fillers, distractors;
    for (int i = 0; i < cfg.n_topics; ++i) topics.push_back(make_word('k', i));
    for (int i = 0; i < cfg.n_fillers; ++i) fillers.push_back(make_word('f', i));
    for (int i = 0; i < cfg.n_distractors; ++i) distractors.push_back(make_word('z', i));

    SyntheticCorpus out;
    std::mt19937_64 train_rng(cfg.seed * 2654435761u + 1);
    std::mt19937_64 dev_rng(cfg.seed * 2654435761u + 2);
    for (int i = 0; i < cfg.n_train; ++i)
        out.train.push_back(make_example(train_rng, cfg, topics, fillers, distractors));
    for (int i = 0; i < cfg.n_dev; ++i)
        out.dev.push_back(make_example(dev_rng, cfg, topics, fillers, distractors));
    return out;
}

} // namespace qgen
