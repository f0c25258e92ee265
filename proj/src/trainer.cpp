#include "qgen/trainer.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "qgen/error.hpp"
#include "qgen/overassoc.hpp"

namespace qgen {

namespace {

struct Adam {
    Eigen::VectorXd m, v;
    long t = 0;
    static constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    explicit Adam(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::VectorXd &params, const Eigen::VectorXd &grad, double lr) {
        ++t;
        m = b1 * m + (1 - b1) * grad;
        v = b2 * v + (1 - b2) * grad.cwiseProduct(grad);
        double mc = 1 - std::pow(b1, t), vc = 1 - std::pow(b2, t);
        params -= lr * ((m / mc).array() / ((v / vc).array().sqrt() + eps)).matrix();
    }
};

// Portable deterministic Fisher-Yates (std::shuffle is implementation-defined).
void shuffle_indices(std::vector<std::size_t> &idx, std::mt19937_64 &rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng() % i]);
}

struct EncodedExample {
    std::vector<int> history;
    std::vector<int> gold; // ends in eos
    std::string gold_text;
    double degree = 0;
};

std::vector<EncodedExample> encode_examples(const Vocab &vocab,
                                            const std::vector<DialogueExample> &examples,
                                            const Normalizer &normalizer) {
    std::vector<EncodedExample> out;
    out.reserve(examples.size());
    for (const auto &ex : examples) {
        EncodedExample enc;
        std::string hist = concat_history(ex.turns);
        enc.history = vocab.encode(hist);
        enc.gold = vocab.encode(ex.gold_query);
        enc.gold.push_back(Vocab::eos);
        enc.gold_text = ex.gold_query;
        enc.degree = degree(hist, ex.gold_query, normalizer);
        out.push_back(std::move(enc));
    }
    return out;
}

struct PhaseOutcome {
    long best_step = 0;
    double best_sum = -1;
    Eigen::VectorXd best_params;
    long end_step = 0;
};

// One training phase with a single strategy; shared by every entry point.
PhaseOutcome run_phase(int phase_no, Strategy strategy, const TrainConfig &cfg, RefModel &model,
                       const std::vector<EncodedExample> &data,
                       const std::vector<EvalGroup> &dev_groups,
                       const std::vector<DialogueExample> &dev_examples,
                       const Normalizer &normalizer, long step_offset, TrainReport &report,
                       std::ofstream &update_log) {
    if (data.empty()) throw ValidationError("train: empty training split");
    if (dev_groups.empty()) throw ValidationError("train: empty dev split");

    std::mt19937_64 rng(cfg.seed * 1000003ull + static_cast<unsigned>(phase_no));
    ScoringFunction scorer = make_scoring_function(cfg.weighting.scoring_fn, normalizer);
    Adam adam(model.params().size());

    long steps_per_epoch =
        static_cast<long>((data.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                          static_cast<std::size_t>(cfg.batch_size));
    long total_steps = steps_per_epoch * cfg.max_epochs;

    PhaseOutcome best;
    best.best_params = model.params();
    int stale_evals = 0;
    long step = 0;
    bool stop = false;
    int reward_probe = 0;
    double reward_probe_sum = 0;

    auto evaluate = [&]() {
        EvalPoint pt;
        pt.step = step_offset + step;
        pt.phase = phase_no;
        pt.dev = evaluate_split(predict_all(model, dev_groups, cfg.decode_beam), dev_groups,
                                normalizer);
        double ce_total = 0;
        std::size_t pairs = 0;
        for (const auto &g : dev_groups) {
            std::vector<int> hist = model.vocab().encode(concat_history(g.turns));
            for (const auto &ref : g.references) {
                std::vector<int> gold = model.vocab().encode(ref);
                gold.push_back(Vocab::eos);
                ce_total += ce_loss(model, hist, gold).scalar;
                ++pairs;
            }
        }
        pt.dev_ce = ce_total / static_cast<double>(pairs);
        pt.entropy = mean_predictive_entropy(model, dev_examples);
        report.history.push_back(pt);
        if (pt.dev.sum > best.best_sum) {
            best.best_sum = pt.dev.sum;
            best.best_step = pt.step;
            best.best_params = model.params();
            stale_evals = 0;
        } else {
            ++stale_evals;
        }
    };

    // Score the starting model before any update so warm starts and
    // combine's phase hand-off can never end below their entry point.
    evaluate();

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) order[i] = i;

    Eigen::VectorXd grad(model.params().size());
    for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
        shuffle_indices(order, rng);
        for (std::size_t at = 0; at < data.size() && !stop;
             at += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t bend = std::min(data.size(), at + static_cast<std::size_t>(cfg.batch_size));
            grad.setZero();
            double loss_total = 0, weight_total = 0;
            for (std::size_t k = at; k < bend; ++k) {
                const EncodedExample &ex = data[order[k]];
                LossValue lv;
                switch (strategy) {
                case Strategy::ce:
                case Strategy::prune:
                    lv = ce_loss(model, ex.history, ex.gold, &grad);
                    break;
                case Strategy::data_weight:
                    lv = weighted_ce_loss(model, ex.history, ex.gold, ex.degree,
                                          cfg.weighting.alpha, &grad);
                    break;
                case Strategy::stepwise:
                    lv = stepwise_loss(model, ex.history, ex.gold, cfg.weighting.beta, &grad);
                    break;
                case Strategy::wholeseq: {
                    WholeseqResult res =
                        wholeseq_loss(model, ex.history, ex.gold_text, cfg.weighting, scorer,
                                      rng, &grad);
                    lv = res.loss;
                    if (reward_probe < 20) {
                        reward_probe_sum += res.baseline;
                        if (++reward_probe == 20 && reward_probe_sum / 20.0 < 0.05) {
                            report.low_reward_warning = true;
                            update_log << nlohmann::json{
                                              {"warning", "near-zero wholeseq rewards; "
                                                          "model looks untrained (no warm-up?)"}}
                                              .dump()
                                       << '\n';
                        }
                    }
                    break;
                }
                case Strategy::combine:
                    throw ConfigError("combine is a schedule, not a per-batch loss");
                }
                loss_total += lv.scalar;
                weight_total += lv.weight_applied;
            }
            double n = static_cast<double>(bend - at);
            grad /= n;
            double mean_loss = loss_total / n;
            if (!std::isfinite(mean_loss))
                throw std::runtime_error("training diverged: non-finite loss at step " +
                                         std::to_string(step_offset + step));
            double lr = cfg.learning_rate *
                        std::max(0.0, 1.0 - static_cast<double>(step) /
                                                static_cast<double>(total_steps));
            adam.step(model.params(), grad, lr);
            ++step;
            update_log << nlohmann::json{{"step", step_offset + step},
                                         {"phase", phase_no},
                                         {"strategy", strategy_name(strategy)},
                                         {"loss", mean_loss},
                                         {"mean_weight", weight_total / n}}
                              .dump()
                       << '\n';
            if (step % cfg.eval_every_steps == 0) {
                evaluate();
                if (stale_evals >= cfg.patience) stop = true;
            }
        }
    }
    if (report.history.empty() ||
        report.history.back().step != step_offset + step || report.history.back().phase != phase_no)
        evaluate();
    best.end_step = step_offset + step;
    return best;
}

} // namespace

void TrainConfig::validate() const {
    weighting.validate();
    if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (eval_every_steps < 1) throw ConfigError("eval_every_steps must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (decode_beam < 1) throw ConfigError("decode_beam must be >= 1");
    if (weighting.strategy == Strategy::combine && warmup_strategy != Strategy::data_weight)
        throw ConfigError("combine requires warmup_strategy = data_weight");
    if (lang != "en" && lang != "zh") throw ConfigError("lang must be en or zh");
}

TrainConfig TrainConfig::from_file(const std::filesystem::path &path) {
    return from_file(path, TrainConfig{});
}

TrainConfig TrainConfig::from_file(const std::filesystem::path &path, const TrainConfig &base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    TrainConfig cfg = base;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        auto trim = [](std::string s) {
            std::size_t b = s.find_first_not_of(" \t\r");
            std::size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        if (eq == std::string::npos)
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "strategy") cfg.weighting.strategy = strategy_from_string(val);
            else if (key == "alpha") cfg.weighting.alpha = std::stod(val);
            else if (key == "beta") cfg.weighting.beta = std::stod(val);
            else if (key == "kappa") cfg.weighting.kappa = std::stoi(val);
            else if (key == "scoring_fn") cfg.weighting.scoring_fn = val;
            else if (key == "prune_keep_buckets") {
                cfg.weighting.prune_keep_buckets.clear();
                for (char c : val)
                    if (c >= '1' && c <= '3') cfg.weighting.prune_keep_buckets.insert(c - '0');
            } else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "max_epochs") cfg.max_epochs = std::stoi(val);
            else if (key == "eval_every_steps") cfg.eval_every_steps = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "warmup_strategy") cfg.warmup_strategy = strategy_from_string(val);
            else if (key == "patience") cfg.patience = std::stoi(val);
            else if (key == "decode_beam") cfg.decode_beam = std::stoi(val);
            else if (key == "allow_cold_start") cfg.allow_cold_start = val == "true" || val == "1";
            else if (key == "embed_dim") cfg.embed_dim = std::stoi(val);
            else if (key == "hidden_dim") cfg.hidden_dim = std::stoi(val);
            else if (key == "max_input_len") cfg.max_input_len = std::stoi(val);
            else if (key == "max_output_len") cfg.max_output_len = std::stoi(val);
            else if (key == "train_file") cfg.train_file = val;
            else if (key == "dev_file") cfg.dev_file = val;
            else if (key == "lang") cfg.lang = val;
            else if (key == "warm_start") cfg.warm_start = val;
            else
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": unknown config key \"" + key + "\"");
        } catch (const std::invalid_argument &) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": bad value for \"" + key + "\": " + val);
        }
    }
    return cfg;
}

std::map<std::string, std::string> predict_all(const Seq2seqModel &model,
                                               const std::vector<EvalGroup> &groups,
                                               int beam_width) {
    std::map<std::string, std::string> out;
    for (const auto &g : groups) {
        std::vector<int> hist = model.vocab().encode(concat_history(g.turns));
        auto cands = beam_search(model, hist, beam_width, model.max_output_len());
        out[g.context_id] = cands.empty() ? std::string() : cands.front().text;
    }
    return out;
}

TrainReport train(const TrainConfig &config, RefModel &model,
                  const std::vector<DialogueExample> &train_examples,
                  const std::vector<EvalGroup> &dev_groups, const Normalizer &normalizer,
                  const std::filesystem::path &out_dir) {
    config.validate();
    if (config.weighting.strategy == Strategy::wholeseq && !config.warm_started &&
        !config.allow_cold_start)
        throw ConfigError("wholeseq without a warm-start checkpoint; pass allow_cold_start to "
                          "override");
    std::filesystem::create_directories(out_dir);

    std::vector<DialogueExample> dev_examples;
    for (const auto &g : dev_groups)
        for (const auto &ref : g.references)
            dev_examples.push_back({g.context_id, g.turns, ref});

    std::vector<DialogueExample> kept = train_examples;
    if (config.weighting.strategy == Strategy::prune) {
        DegreeReport report = corpus_report(train_examples, normalizer);
        kept = prune_filter(train_examples, report, config.weighting.prune_keep_buckets);
    }
    std::vector<EncodedExample> data = encode_examples(model.vocab(), kept, normalizer);

    std::ofstream update_log(out_dir / "update_log.jsonl");
    if (!update_log) throw ConfigError("cannot write update log under " + out_dir.string());

    TrainReport report;
    if (config.weighting.strategy == Strategy::combine) {
        PhaseOutcome p1 = run_phase(1, config.warmup_strategy, config, model, data, dev_groups,
                                    dev_examples, normalizer, 0, report, update_log);
        model.params() = p1.best_params;
        model.save(out_dir / "checkpoint_phase1_best.json");
        report.phases.push_back({1, config.warmup_strategy, 0, p1.end_step, p1.best_step,
                                 p1.best_sum});
        PhaseOutcome p2 = run_phase(2, Strategy::wholeseq, config, model, data, dev_groups,
                                    dev_examples, normalizer, p1.best_step, report, update_log);
        report.phases.push_back({2, Strategy::wholeseq, p1.best_step, p2.end_step, p2.best_step,
                                 p2.best_sum});
        if (p2.best_sum >= p1.best_sum) {
            model.params() = p2.best_params;
        } else {
            model.params() = p1.best_params;
        }
    } else {
        Strategy s = config.weighting.strategy;
        PhaseOutcome p = run_phase(1, s, config, model, data, dev_groups, dev_examples,
                                   normalizer, 0, report, update_log);
        report.phases.push_back({1, s, 0, p.end_step, p.best_step, p.best_sum});
        model.params() = p.best_params;
    }

    report.best_sum = -1;
    for (const auto &pt : report.history)
        if (pt.dev.sum > report.best_sum) {
            report.best_sum = pt.dev.sum;
            report.best_step = pt.step;
        }
    report.checkpoint = "checkpoint_best.json";
    model.save(out_dir / report.checkpoint);

    std::ofstream rep(out_dir / "train_report.json");
    rep << train_report_to_json(report).dump(2) << '\n';
    return report;
}

nlohmann::json train_report_to_json(const TrainReport &report) {
    nlohmann::json j;
    j["best_step"] = report.best_step;
    j["best_sum"] = report.best_sum;
    j["checkpoint"] = report.checkpoint;
    j["low_reward_warning"] = report.low_reward_warning;
    j["phases"] = nlohmann::json::array();
    for (const auto &p : report.phases)
        j["phases"].push_back({{"phase", p.phase},
                               {"strategy", strategy_name(p.strategy)},
                               {"start_step", p.start_step},
                               {"end_step", p.end_step},
                               {"best_step", p.best_step},
                               {"best_sum", p.best_sum}});
    j["history"] = nlohmann::json::array();
    for (const auto &pt : report.history)
        j["history"].push_back({{"step", pt.step},
                                {"phase", pt.phase},
                                {"dev", bundle_to_json(pt.dev)},
                                {"dev_ce", pt.dev_ce},
                                {"entropy", pt.entropy}});
    return j;
}

std::vector<SweepRow> diagnostics_sweep(const TrainConfig &base,
                                        const std::vector<DialogueExample> &train_examples,
                                        const std::vector<DialogueExample> &dev_examples,
                                        const std::vector<std::vector<int>> &combos,
                                        const Normalizer &normalizer,
                                        const std::filesystem::path &out_dir) {
    if (combos.empty()) throw ConfigError("diagnostics_sweep: no combos given");
    DegreeReport train_report = corpus_report(train_examples, normalizer);
    DegreeReport dev_report = corpus_report(dev_examples, normalizer);

    std::vector<std::string> vocab_texts;
    for (const auto &ex : train_examples) {
        vocab_texts.push_back(concat_history(ex.turns));
        vocab_texts.push_back(ex.gold_query);
    }
    Vocab vocab = Vocab::build(vocab_texts, normalizer.lang());

    // dev subsets by bucket (1, 2, 3, ALL)
    std::vector<std::vector<DialogueExample>> dev_subsets(4);
    for (std::size_t i = 0; i < dev_examples.size(); ++i) {
        dev_subsets[static_cast<std::size_t>(dev_report.per_example[i].bucket - 1)].push_back(
            dev_examples[i]);
        dev_subsets[3].push_back(dev_examples[i]);
    }
    std::vector<EvalGroup> dev_all_groups = group_for_eval(dev_examples);

    std::vector<SweepRow> rows;
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
        SweepRow row;
        row.combo = combos[ci];
        std::set<int> keep(combos[ci].begin(), combos[ci].end());
        std::vector<DialogueExample> kept = prune_filter(train_examples, train_report, keep);

        RefModelConfig mc{base.embed_dim, base.hidden_dim, base.max_input_len,
                          base.max_output_len, base.seed};
        RefModel model(vocab, mc);
        TrainConfig cfg = base;
        cfg.weighting.strategy = Strategy::ce;
        std::string combo_tag = "combo";
        for (int b : combos[ci]) combo_tag += std::to_string(b);
        TrainReport rep =
            train(cfg, model, kept, dev_all_groups, normalizer, out_dir / combo_tag);

        for (int s = 0; s < 4; ++s) {
            if (dev_subsets[static_cast<std::size_t>(s)].empty()) continue;
            auto groups = group_for_eval(dev_subsets[static_cast<std::size_t>(s)]);
            row.dev_subset[s] =
                evaluate_split(predict_all(model, groups, cfg.decode_beam), groups, normalizer);
        }
        row.entropy = mean_predictive_entropy(model, dev_examples);
        row.final_dev_ce = rep.history.back().dev_ce;

        // mean per-token gold probability per dev bucket
        double prob_sum[3] = {0, 0, 0};
        std::size_t prob_n[3] = {0, 0, 0};
        for (std::size_t i = 0; i < dev_examples.size(); ++i) {
            const auto &ex = dev_examples[i];
            std::vector<int> hist = vocab.encode(concat_history(ex.turns));
            std::vector<int> gold = vocab.encode(ex.gold_query);
            gold.push_back(Vocab::eos);
            auto dists = model.step_dists(hist, gold);
            double mean_p = 0;
            for (std::size_t t = 0; t < gold.size(); ++t)
                mean_p += dists[t][gold[t]];
            mean_p /= static_cast<double>(gold.size());
            int b = dev_report.per_example[i].bucket - 1;
            prob_sum[b] += mean_p;
            prob_n[b]++;
        }
        for (int b = 0; b < 3; ++b)
            row.gold_prob_by_bucket[b] =
                prob_n[b] ? prob_sum[b] / static_cast<double>(prob_n[b]) : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json sweep_to_json(const std::vector<SweepRow> &rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto &r : rows) {
        nlohmann::json row;
        row["combo"] = r.combo;
        const char *names[4] = {"dev_1", "dev_2", "dev_3", "dev_all"};
        for (int s = 0; s < 4; ++s) row[names[s]] = bundle_to_json(r.dev_subset[s]);
        row["entropy"] = r.entropy;
        row["final_dev_ce"] = r.final_dev_ce;
        row["gold_prob_by_bucket"] = {r.gold_prob_by_bucket[0], r.gold_prob_by_bucket[1],
                                      r.gold_prob_by_bucket[2]};
        j.push_back(std::move(row));
    }
    return j;
}

} // namespace qgen
