#include "qgen/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qgen/corpus.hpp"
#include "qgen/error.hpp"
#include "qgen/metrics.hpp"
#include "qgen/model.hpp"
#include "qgen/overassoc.hpp"
#include "qgen/synthetic.hpp"
#include "qgen/trainer.hpp"

namespace qgen::cli {

namespace {

Normalizer normalizer_for(const std::string &lang) {
    if (lang == "en") return Normalizer::english();
    if (lang == "zh") return Normalizer::chinese();
    throw ConfigError("unknown --lang: " + lang + " (expected en or zh)");
}

// Named hyperparameter presets for the two supported dataset profiles.
void apply_profile(TrainConfig &cfg, const std::string &profile) {
    if (profile.empty()) return;
    if (profile == "woi") {
        cfg.weighting.alpha = 2.0;
        cfg.weighting.beta = 1.0;
        cfg.weighting.kappa = 10;
        cfg.batch_size = 64;
        cfg.lang = "en";
    } else if (profile == "dusinc") {
        cfg.weighting.alpha = 0.5;
        cfg.weighting.beta = 0.75;
        cfg.weighting.kappa = 10;
        cfg.batch_size = 16;
        cfg.lang = "zh";
    } else {
        throw ConfigError("unknown --profile: " + profile + " (expected woi or dusinc)");
    }
}

void write_or_print(const nlohmann::json &j, const std::string &out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot write output file: " + out_path);
    out << j.dump(2) << '\n';
}

std::map<std::string, std::string> load_predictions(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open prediction file: " + path);
    std::map<std::string, std::string> preds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("context_id") || !rec.contains("prediction"))
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": expected {\"context_id\": ..., \"prediction\": ...}");
        preds[rec["context_id"].get<std::string>()] = rec["prediction"].get<std::string>();
    }
    return preds;
}

RefModel build_or_load_model(const TrainConfig &cfg,
                             const std::vector<DialogueExample> &train_examples, Lang lang,
                             bool &warm_started) {
    if (!cfg.warm_start.empty()) {
        warm_started = true;
        return RefModel::load(cfg.warm_start);
    }
    warm_started = false;
    std::vector<std::string> texts;
    for (const auto &ex : train_examples) {
        texts.push_back(concat_history(ex.turns));
        texts.push_back(ex.gold_query);
    }
    RefModelConfig mc{cfg.embed_dim, cfg.hidden_dim, cfg.max_input_len, cfg.max_output_len,
                      cfg.seed};
    return RefModel(Vocab::build(texts, lang), mc);
}

int run_checked(const std::vector<std::string> &args) {
    CLI::App app{"Training and evaluation toolkit for conversational query producers"};
    app.require_subcommand(1);

    // analyze
    auto *analyze = app.add_subcommand("analyze", "Over-association degree report for a corpus");
    std::string an_corpus, an_lang = "en", an_out;
    analyze->add_option("--corpus", an_corpus, "corpus JSONL")->required();
    analyze->add_option("--lang", an_lang, "en|zh");
    analyze->add_option("--out", an_out, "report JSON path (stdout if omitted)");

    // train
    auto *train_cmd = app.add_subcommand("train", "Train a query producer");
    std::string tr_config, tr_profile, tr_out = "train_out";
    std::optional<std::uint64_t> tr_seed;
    train_cmd->add_option("--config", tr_config, "key = value config file")->required();
    train_cmd->add_option("--profile", tr_profile, "woi|dusinc hyperparameter defaults");
    train_cmd->add_option("--seed", tr_seed, "override config seed");
    train_cmd->add_option("--out", tr_out, "output directory");

    // evaluate
    auto *eval_cmd = app.add_subcommand("evaluate", "Score predictions against references");
    std::string ev_pred, ev_ref, ev_lang = "en", ev_metrics = "uni_f1,bleu,rouge", ev_out;
    eval_cmd->add_option("--pred", ev_pred, "predictions JSONL")->required();
    eval_cmd->add_option("--ref", ev_ref, "reference corpus JSONL")->required();
    eval_cmd->add_option("--metrics", ev_metrics, "subset of uni_f1,bleu,rouge");
    eval_cmd->add_option("--lang", ev_lang, "en|zh");
    eval_cmd->add_option("--out", ev_out, "bundle JSON path (stdout if omitted)");

    // predict
    auto *pred_cmd = app.add_subcommand("predict", "Decode queries for a corpus");
    std::string pr_model, pr_input, pr_out;
    int pr_beam = 4;
    pred_cmd->add_option("--model", pr_model, "checkpoint path")->required();
    pred_cmd->add_option("--input", pr_input, "corpus JSONL")->required();
    pred_cmd->add_option("--beam", pr_beam, "beam width");
    pred_cmd->add_option("--out", pr_out, "predictions JSONL path")->required();

    // sweep
    auto *sweep_cmd = app.add_subcommand("sweep", "Train per bucket combo and compare dev subsets");
    std::string sw_config, sw_profile, sw_out;
    std::vector<std::string> sw_combos;
    std::optional<std::uint64_t> sw_seed;
    sweep_cmd->add_option("--config", sw_config, "key = value config file")->required();
    sweep_cmd->add_option("--combos", sw_combos,
                          "bucket subsets, e.g. --combos 1,2 --combos 1,2,3")->required();
    sweep_cmd->add_option("--profile", sw_profile, "woi|dusinc hyperparameter defaults");
    sweep_cmd->add_option("--seed", sw_seed, "override config seed");
    sweep_cmd->add_option("--out", sw_out, "table JSON path (stdout if omitted)");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? 0 : 1; // prints help or the parse error
    }

    if (*analyze) {
        Normalizer norm = normalizer_for(an_lang);
        auto examples = load_corpus(an_corpus, Split::train);
        DegreeReport report = corpus_report(examples, norm);
        write_or_print(report_to_json(report), an_out);
        std::cerr << "bucket shares: " << report.bucket_shares[0] << " / "
                  << report.bucket_shares[1] << " / " << report.bucket_shares[2] << '\n';
    } else if (*train_cmd) {
        TrainConfig base;
        apply_profile(base, tr_profile);
        TrainConfig cfg = TrainConfig::from_file(tr_config, base);
        if (tr_seed) cfg.seed = *tr_seed;
        if (cfg.train_file.empty() || cfg.dev_file.empty())
            throw ConfigError("config must set train_file and dev_file");
        Normalizer norm = normalizer_for(cfg.lang);
        auto train_examples = load_corpus(cfg.train_file, Split::train);
        auto dev_groups = group_for_eval(load_corpus(cfg.dev_file, Split::dev));
        RefModel model = build_or_load_model(cfg, train_examples, norm.lang(), cfg.warm_started);
        TrainReport report = train(cfg, model, train_examples, dev_groups, norm, tr_out);
        std::cerr << "best dev Sum. " << report.best_sum << " at step " << report.best_step
                  << "; checkpoint " << (std::filesystem::path(tr_out) / report.checkpoint).string()
                  << '\n';
    } else if (*eval_cmd) {
        Normalizer norm = normalizer_for(ev_lang);
        auto groups = group_for_eval(load_corpus(ev_ref, Split::test));
        ScoreBundle bundle = evaluate_split(load_predictions(ev_pred), groups, norm);
        nlohmann::json full = bundle_to_json(bundle);
        nlohmann::json out;
        bool want_f1 = ev_metrics.find("uni_f1") != std::string::npos;
        bool want_bleu = ev_metrics.find("bleu") != std::string::npos;
        bool want_rouge = ev_metrics.find("rouge") != std::string::npos;
        if (!want_f1 && !want_bleu && !want_rouge)
            throw ConfigError("--metrics selects none of uni_f1, bleu, rouge");
        if (want_f1) out["uni_f1"] = full["uni_f1"];
        if (want_bleu) {
            out["bleu1"] = full["bleu1"];
            out["bleu2"] = full["bleu2"];
        }
        if (want_f1 && want_bleu) out["sum"] = full["sum"];
        if (want_rouge) {
            out["rouge1"] = full["rouge1"];
            out["rouge2"] = full["rouge2"];
            out["rougeL"] = full["rougeL"];
        }
        write_or_print(out, ev_out);
    } else if (*pred_cmd) {
        RefModel model = RefModel::load(pr_model);
        auto groups = group_for_eval(load_corpus(pr_input, Split::test));
        auto preds = predict_all(model, groups, pr_beam);
        std::ofstream out(pr_out);
        if (!out) throw ConfigError("cannot write prediction file: " + pr_out);
        for (const auto &g : groups)
            out << nlohmann::json{{"context_id", g.context_id},
                                  {"prediction", preds.at(g.context_id)}}
                       .dump()
                << '\n';
    } else if (*sweep_cmd) {
        TrainConfig base;
        apply_profile(base, sw_profile);
        TrainConfig cfg = TrainConfig::from_file(sw_config, base);
        if (sw_seed) cfg.seed = *sw_seed;
        if (cfg.train_file.empty() || cfg.dev_file.empty())
            throw ConfigError("config must set train_file and dev_file");
        Normalizer norm = normalizer_for(cfg.lang);
        auto train_examples = load_corpus(cfg.train_file, Split::train);
        auto dev_examples = load_corpus(cfg.dev_file, Split::dev);
        std::vector<std::vector<int>> combos;
        for (const auto &c : sw_combos) {
            std::vector<int> combo;
            for (char ch : c)
                if (ch >= '1' && ch <= '3') combo.push_back(ch - '0');
            if (combo.empty()) throw ConfigError("bad --combos entry: " + c);
            combos.push_back(combo);
        }
        auto rows = diagnostics_sweep(cfg, train_examples, dev_examples, combos, norm,
                                      "sweep_out");
        write_or_print(sweep_to_json(rows), sw_out);
    }
    return 0;
}

} // namespace

int run(const std::vector<std::string> &args) {
    try {
        return run_checked(args);
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) return 0; // --help
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const ConfigError &e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 1;
    } catch (const ValidationError &e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 1;
    } catch (const ParseError &e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace qgen::cli
