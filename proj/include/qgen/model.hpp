#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "qgen/corpus.hpp"
#include "qgen/textnorm.hpp"

namespace qgen {

// Word-level vocabulary with fixed reserved ids.
struct Vocab {
    static constexpr int pad = 0;
    static constexpr int bos = 1;
    static constexpr int eos = 2;
    static constexpr int unk = 3;

    std::vector<std::string> tokens; // tokens[id], includes the reserved ones
    std::unordered_map<std::string, int> index;
    Lang lang = Lang::en;

    static Vocab build(const std::vector<std::string> &texts, Lang lang = Lang::en);
    static Vocab from_tokens(std::vector<std::string> tokens, Lang lang = Lang::en);

    int size() const { return static_cast<int>(tokens.size()); }
    int id(const std::string &token) const;
    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const; // skips reserved ids
};

// A decoded query. tokens ends in eos; logprob is the sum of stepwise token
// log-probabilities under the producing model.
struct BeamCandidate {
    std::vector<int> tokens;
    double logprob = 0;
    std::string text;
};

// Anything that maps (history, prefix) to a next-token distribution.
class Seq2seqModel {
  public:
    virtual ~Seq2seqModel() = default;
    virtual const Vocab &vocab() const = 0;
    virtual int max_input_len() const = 0;
    virtual int max_output_len() const = 0;
    // Valid probability vector over the vocabulary; deterministic.
    virtual Eigen::VectorXd next_token_dist(std::span<const int> history_ids,
                                            std::span<const int> prefix_ids) const = 0;
};

// Seq2seq model that additionally exposes teacher-forced distributions and a
// gradient hook, which is all the training losses need.
class TrainableModel : public Seq2seqModel {
  public:
    // dists[i] = P(. | history, out_tokens[0..i-1]); dists.size() == out_tokens.size().
    virtual std::vector<Eigen::VectorXd> step_dists(std::span<const int> history_ids,
                                                    std::span<const int> out_tokens) const = 0;
    // Accumulates d(loss)/d(params) into grad given d(loss)/d(logits) per step.
    virtual void backprop(std::span<const int> history_ids, std::span<const int> out_tokens,
                          const std::vector<Eigen::VectorXd> &dlogits,
                          Eigen::VectorXd &grad) const = 0;
    virtual Eigen::VectorXd &params() = 0;
    virtual const Eigen::VectorXd &params() const = 0;
};

struct RefModelConfig {
    int embed_dim = 24;
    int hidden_dim = 32;
    int max_input_len = 256;
    int max_output_len = 32;
    std::uint64_t seed = 0;
};

// Small RNN encoder-decoder with dot-product attention. float64 throughout,
// which gives finite-difference gradient checks enough headroom.
//
// Parameters (flat layout, in order):
//   Emb   V x E    shared token embeddings
//   W_ex  H x E    encoder input projection
//   W_eh  H x H    encoder recurrence
//   b_e   H
//   W_dx  H x E    decoder input projection
//   W_dh  H x H    decoder recurrence
//   b_d   H
//   W_i   H x H    decoder state init from the last encoder state
//   b_i   H
//   W_o   V x 2H   output layer over [state; attention context]
//   b_o   V
// giving V*E + 2*(H*E + H*H + H) + H*H + H + 2*V*H + V parameters.
class RefModel final : public TrainableModel {
  public:
    RefModel(Vocab vocab, RefModelConfig config);

    static std::size_t param_count(int vocab_size, const RefModelConfig &config);

    const Vocab &vocab() const override { return vocab_; }
    int max_input_len() const override { return config_.max_input_len; }
    int max_output_len() const override { return config_.max_output_len; }
    const RefModelConfig &config() const { return config_; }

    Eigen::VectorXd next_token_dist(std::span<const int> history_ids,
                                    std::span<const int> prefix_ids) const override;
    std::vector<Eigen::VectorXd> step_dists(std::span<const int> history_ids,
                                            std::span<const int> out_tokens) const override;
    void backprop(std::span<const int> history_ids, std::span<const int> out_tokens,
                  const std::vector<Eigen::VectorXd> &dlogits,
                  Eigen::VectorXd &grad) const override;

    Eigen::VectorXd &params() override { return params_; }
    const Eigen::VectorXd &params() const override { return params_; }

    // Named view into the flat parameter vector ("Emb", "W_o", ...).
    Eigen::Map<Eigen::MatrixXd> param_block(const std::string &name);

    void save(const std::filesystem::path &path) const;
    static RefModel load(const std::filesystem::path &path);

  private:
    struct Forward; // per-call activation cache
    void run_forward(std::span<const int> history_ids, std::span<const int> out_prefix,
                     Forward &fwd) const;

    Vocab vocab_;
    RefModelConfig config_;
    Eigen::VectorXd params_;
};

// Exact top-k decoding by sequence log-probability (best-first expansion over
// the prefix tree; admissible because extending a prefix never increases its
// log-probability). Candidates are sorted by logprob descending, ties broken
// by lexicographic token ids. Sequences still open at max_len are closed by
// appending eos with its log-probability added.
std::vector<BeamCandidate> beam_search(const Seq2seqModel &model,
                                       std::span<const int> history_ids, int beam_width,
                                       int max_len);

// Mean Shannon entropy (nats) of next_token_dist teacher-forced on the gold
// query, over all gold-token positions (eos included).
double mean_predictive_entropy(const Seq2seqModel &model,
                               const std::vector<DialogueExample> &examples);

double entropy(const Eigen::VectorXd &dist);

} // namespace qgen
