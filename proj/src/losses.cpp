#include "qgen/losses.hpp"

#include <algorithm>
#include <cmath>

#include "qgen/error.hpp"

namespace qgen {

namespace {

// Shared core: scalar = weight * sum_i -(target_i . log P_i) with constant
// targets, so d(loss)/d(logits_i) = weight * (P_i - target_i).
LossValue target_loss(const TrainableModel &model, std::span<const int> history_ids,
                      std::span<const int> out_tokens,
                      const std::vector<Eigen::VectorXd> &dists,
                      const std::vector<Eigen::VectorXd> &targets, double weight,
                      Eigen::VectorXd *grad) {
    LossValue out;
    out.weight_applied = weight;
    std::vector<Eigen::VectorXd> dlogits;
    if (grad) dlogits.resize(dists.size());
    for (std::size_t i = 0; i < dists.size(); ++i) {
        const Eigen::VectorXd &p = dists[i];
        const Eigen::VectorXd &t = targets[i];
        double term = 0;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            if (t[k] == 0.0) continue;
            double pk = p[k];
            if (pk < kLogProbEps) {
                pk = kLogProbEps;
                out.clamped = true;
            }
            term -= t[k] * std::log(pk);
        }
        out.per_token.push_back(weight * term);
        out.scalar += weight * term;
        if (grad) dlogits[i] = weight * (p - t);
    }
    if (grad && weight != 0.0) model.backprop(history_ids, out_tokens, dlogits, *grad);
    return out;
}

std::vector<Eigen::VectorXd> onehot_targets(std::span<const int> tokens, Eigen::Index v) {
    std::vector<Eigen::VectorXd> t(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        t[i] = Eigen::VectorXd::Zero(v);
        t[i][tokens[i]] = 1.0;
    }
    return t;
}

void require_eos_terminated(std::span<const int> ids) {
    if (ids.empty() || ids.back() != Vocab::eos)
        throw ValidationError("gold token sequence must end in eos");
}

} // namespace

Strategy strategy_from_string(const std::string &name) {
    if (name == "ce") return Strategy::ce;
    if (name == "prune") return Strategy::prune;
    if (name == "data_weight") return Strategy::data_weight;
    if (name == "stepwise") return Strategy::stepwise;
    if (name == "wholeseq") return Strategy::wholeseq;
    if (name == "combine") return Strategy::combine;
    throw ConfigError("unknown strategy: \"" + name + "\"");
}

std::string strategy_name(Strategy s) {
    switch (s) {
    case Strategy::ce: return "ce";
    case Strategy::prune: return "prune";
    case Strategy::data_weight: return "data_weight";
    case Strategy::stepwise: return "stepwise";
    case Strategy::wholeseq: return "wholeseq";
    case Strategy::combine: return "combine";
    }
    return "?";
}

void WeightingConfig::validate() const {
    if (alpha < 0) throw ConfigError("alpha must be >= 0");
    if (beta < 0 || beta > 1) throw ConfigError("beta must be in [0,1]");
    if (kappa < 1) throw ConfigError("kappa must be >= 1");
    for (int b : prune_keep_buckets)
        if (b < 1 || b > 3) throw ConfigError("prune_keep_buckets entries must be in {1,2,3}");
    if ((strategy == Strategy::wholeseq || strategy == Strategy::combine) && kappa < 2)
        throw ConfigError("wholeseq needs kappa >= 2 (with kappa = 1 the reward is always 0)");
}

LossValue ce_loss(const TrainableModel &model, std::span<const int> history_ids,
                  std::span<const int> gold_ids, Eigen::VectorXd *grad) {
    require_eos_terminated(gold_ids);
    auto dists = model.step_dists(history_ids, gold_ids);
    return target_loss(model, history_ids, gold_ids, dists,
                       onehot_targets(gold_ids, model.vocab().size()), 1.0, grad);
}

double instance_weight(double d, double alpha) {
    if (d < 0 || d > 1) throw ValidationError("instance_weight: degree out of [0,1]");
    if (alpha < 0) throw ValidationError("instance_weight: alpha must be >= 0");
    return std::pow(1.0 - d, alpha);
}

LossValue weighted_ce_loss(const TrainableModel &model, std::span<const int> history_ids,
                           std::span<const int> gold_ids, double d, double alpha,
                           Eigen::VectorXd *grad) {
    require_eos_terminated(gold_ids);
    double w = instance_weight(d, alpha);
    auto dists = model.step_dists(history_ids, gold_ids);
    return target_loss(model, history_ids, gold_ids, dists,
                       onehot_targets(gold_ids, model.vocab().size()), w, grad);
}

std::vector<DialogueExample> prune_filter(const std::vector<DialogueExample> &examples,
                                          const DegreeReport &report, const std::set<int> &keep) {
    if (report.per_example.size() != examples.size())
        throw ValidationError("prune_filter: report does not cover the example list");
    std::vector<DialogueExample> out;
    for (std::size_t i = 0; i < examples.size(); ++i)
        if (keep.count(report.per_example[i].bucket)) out.push_back(examples[i]);
    if (out.empty()) throw ValidationError("prune_filter: no examples left after pruning");
    return out;
}

LossValue stepwise_loss(const TrainableModel &model, std::span<const int> history_ids,
                        std::span<const int> gold_ids, double beta, Eigen::VectorXd *grad) {
    require_eos_terminated(gold_ids);
    if (beta < 0 || beta > 1) throw ValidationError("stepwise_loss: beta must be in [0,1]");
    auto dists = model.step_dists(history_ids, gold_ids);
    std::vector<Eigen::VectorXd> targets(dists.size());
    for (std::size_t i = 0; i < dists.size(); ++i) {
        targets[i] = beta * dists[i]; // detached model distribution
        targets[i][gold_ids[i]] += 1.0 - beta;
    }
    return target_loss(model, history_ids, gold_ids, dists, targets, 1.0, grad);
}

const BeamCandidate &sample_candidate(const std::vector<BeamCandidate> &candidates,
                                      std::mt19937_64 &rng) {
    if (candidates.empty()) throw ValidationError("sample_candidate: empty candidate list");
    double norm = 0;
    std::vector<double> probs(candidates.size());
    double max_lp = candidates.front().logprob;
    for (const auto &c : candidates) max_lp = std::max(max_lp, c.logprob);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        probs[i] = std::exp(candidates[i].logprob - max_lp);
        norm += probs[i];
    }
    double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0) * norm;
    double acc = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        acc += probs[i];
        if (u < acc) return candidates[i];
    }
    return candidates.back();
}

double baseline_reward(const std::vector<BeamCandidate> &candidates, const std::string &reference,
                       const ScoringFunction &f) {
    if (candidates.empty()) throw ValidationError("baseline_reward: empty candidate list");
    double total = 0;
    for (const auto &c : candidates) total += f.score(c.text, reference);
    return total / static_cast<double>(candidates.size());
}

WholeseqResult wholeseq_loss(const TrainableModel &model, std::span<const int> history_ids,
                             const std::string &reference, const WeightingConfig &config,
                             const ScoringFunction &f, std::mt19937_64 &rng,
                             Eigen::VectorXd *grad) {
    if (config.kappa < 2)
        throw ConfigError("wholeseq_loss: kappa must be >= 2 (reward is identically 0 at 1)");
    auto candidates = beam_search(model, history_ids, config.kappa, model.max_output_len());
    if (candidates.empty()) throw ValidationError("wholeseq_loss: decoding produced no candidates");

    WholeseqResult res;
    res.candidate = sample_candidate(candidates, rng);
    res.score = f.score(res.candidate.text, reference);
    res.baseline = baseline_reward(candidates, reference, f);
    double reward = res.score - res.baseline; // constant under differentiation

    const std::vector<int> &c = res.candidate.tokens;
    auto dists = model.step_dists(history_ids, c);
    res.loss = target_loss(model, history_ids, c, dists,
                           onehot_targets(c, model.vocab().size()), reward, grad);
    return res;
}

} // namespace qgen
