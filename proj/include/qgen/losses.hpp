#pragma once

#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qgen/metrics.hpp"
#include "qgen/model.hpp"
#include "qgen/overassoc.hpp"

namespace qgen {

enum class Strategy { ce, prune, data_weight, stepwise, wholeseq, combine };

Strategy strategy_from_string(const std::string &name);
std::string strategy_name(Strategy s);

struct WeightingConfig {
    Strategy strategy = Strategy::ce;
    double alpha = 2.0;         // data-weighting exponent
    double beta = 1.0;          // stepwise target mix, in [0,1]
    int kappa = 10;             // wholeseq beam width
    std::string scoring_fn = "uni_f1";
    std::set<int> prune_keep_buckets = {1, 2};

    void validate() const;
};

struct LossValue {
    double scalar = 0;
    std::vector<double> per_token;
    double weight_applied = 1.0; // w for data_weight, reward for wholeseq, 1 otherwise
    bool clamped = false;        // a zero-probability target hit the log(eps) clamp
};

inline constexpr double kLogProbEps = 1e-12;

// Eq-style CE over a gold sequence (gold_ids must end in eos). When grad is
// non-null the analytic parameter gradient is accumulated into it.
LossValue ce_loss(const TrainableModel &model, std::span<const int> history_ids,
                  std::span<const int> gold_ids, Eigen::VectorXd *grad = nullptr);

// w = (1 - d)^alpha
double instance_weight(double d, double alpha);

LossValue weighted_ce_loss(const TrainableModel &model, std::span<const int> history_ids,
                           std::span<const int> gold_ids, double d, double alpha,
                           Eigen::VectorXd *grad = nullptr);

// Keeps exactly the examples whose degree bucket is in keep, order-stable.
std::vector<DialogueExample> prune_filter(const std::vector<DialogueExample> &examples,
                                          const DegreeReport &report, const std::set<int> &keep);

// Self-distillation target: beta * P_i + (1 - beta) * onehot(gold_i), with
// P_i detached (no gradient flows through the target side).
LossValue stepwise_loss(const TrainableModel &model, std::span<const int> history_ids,
                        std::span<const int> gold_ids, double beta,
                        Eigen::VectorXd *grad = nullptr);

// Samples proportional to exp(logprob) renormalized over the candidate set.
const BeamCandidate &sample_candidate(const std::vector<BeamCandidate> &candidates,
                                      std::mt19937_64 &rng);

// s_b: mean of f(candidate, reference) over all candidates.
double baseline_reward(const std::vector<BeamCandidate> &candidates, const std::string &reference,
                       const ScoringFunction &f);

struct WholeseqResult {
    LossValue loss;
    BeamCandidate candidate;
    double score = 0;    // f(candidate, reference)
    double baseline = 0; // s_b
};

// REINFORCE with the top-kappa mean as baseline: decodes top-kappa candidates,
// samples one, and scales its CE by the constant reward (score - baseline).
WholeseqResult wholeseq_loss(const TrainableModel &model, std::span<const int> history_ids,
                             const std::string &reference, const WeightingConfig &config,
                             const ScoringFunction &f, std::mt19937_64 &rng,
                             Eigen::VectorXd *grad = nullptr);

} // namespace qgen
