#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "qgen/losses.hpp"
#include "qgen/metrics.hpp"
#include "qgen/model.hpp"

namespace qgen {

struct TrainConfig {
    WeightingConfig weighting;
    double learning_rate = 5e-5;
    int batch_size = 64;
    int max_epochs = 20;
    int eval_every_steps = 50;
    std::uint64_t seed = 0;
    Strategy warmup_strategy = Strategy::data_weight; // phase 1 of combine
    int patience = 5;        // evaluations without dev-Sum. improvement
    int decode_beam = 4;     // dev decoding width
    bool warm_started = false;
    bool allow_cold_start = false;

    // model geometry (used when the caller builds a fresh reference model)
    int embed_dim = 24;
    int hidden_dim = 32;
    int max_input_len = 256;
    int max_output_len = 32;

    // CLI-level fields carried in the same config file
    std::string train_file;
    std::string dev_file;
    std::string lang = "en";
    std::string warm_start; // checkpoint path, optional

    // flat key = value file; unknown keys are rejected
    static TrainConfig from_file(const std::filesystem::path &path);
    static TrainConfig from_file(const std::filesystem::path &path, const TrainConfig &base);
    void validate() const;
};

struct EvalPoint {
    long step = 0;
    int phase = 1;
    ScoreBundle dev;
    double dev_ce = 0;
    double entropy = 0;
};

struct PhaseInfo {
    int phase = 1;
    Strategy strategy = Strategy::ce;
    long start_step = 0;
    long end_step = 0;
    long best_step = 0;
    double best_sum = 0;
};

struct TrainReport {
    std::vector<EvalPoint> history;
    std::vector<PhaseInfo> phases;
    long best_step = 0;
    double best_sum = 0;
    std::string checkpoint; // filename relative to the output directory
    bool low_reward_warning = false;
};

nlohmann::json train_report_to_json(const TrainReport &report);

// Trains the model in place. The best-dev-Sum. checkpoint is persisted under
// out_dir together with an update log (JSONL of step/phase/loss/weight). For
// strategy = combine this runs warmup_strategy to a dev plateau, reloads the
// phase-1 best checkpoint, then continues with wholeseq.
TrainReport train(const TrainConfig &config, RefModel &model,
                  const std::vector<DialogueExample> &train_examples,
                  const std::vector<EvalGroup> &dev_groups, const Normalizer &normalizer,
                  const std::filesystem::path &out_dir);

// Decodes one prediction per group.
std::map<std::string, std::string> predict_all(const Seq2seqModel &model,
                                               const std::vector<EvalGroup> &groups,
                                               int beam_width);

struct SweepRow {
    std::vector<int> combo;      // buckets used for training
    ScoreBundle dev_subset[4];   // subsets 1, 2, 3, ALL (empty subset -> zeros)
    double entropy = 0;          // dev predictive entropy of the trained model
    double final_dev_ce = 0;
    double gold_prob_by_bucket[3] = {0, 0, 0}; // mean per-token gold probability
};

// Trains one CE model per bucket combination and evaluates it on the
// degree-bucketed dev subsets.
std::vector<SweepRow> diagnostics_sweep(const TrainConfig &base,
                                        const std::vector<DialogueExample> &train_examples,
                                        const std::vector<DialogueExample> &dev_examples,
                                        const std::vector<std::vector<int>> &combos,
                                        const Normalizer &normalizer,
                                        const std::filesystem::path &out_dir);

nlohmann::json sweep_to_json(const std::vector<SweepRow> &rows);

} // namespace qgen
