#include "qgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "qgen/error.hpp"

namespace qgen {

namespace {

constexpr const char *kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

double uniform_pm(std::mt19937_64 &rng, double scale) {
    // Portable uniform in (-scale, scale); uniform_real_distribution is
    // implementation-defined and would break cross-platform determinism.
    double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
    return (2.0 * u - 1.0) * scale;
}

Eigen::VectorXd softmax(const Eigen::VectorXd &z) {
    Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp();
    return p / p.sum();
}

} // namespace

Vocab Vocab::build(const std::vector<std::string> &texts, Lang lang) {
    std::set<std::string> seen;
    for (const auto &t : texts)
        for (auto &tok : surface_tokens(t, lang)) seen.insert(std::move(tok));
    std::vector<std::string> toks;
    for (const char *r : kReserved) toks.emplace_back(r);
    for (const auto &t : seen)
        if (std::find(std::begin(kReserved), std::end(kReserved), t) == std::end(kReserved))
            toks.push_back(t);
    return from_tokens(std::move(toks), lang);
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens, Lang lang) {
    if (tokens.size() < 4 || tokens[0] != kReserved[0] || tokens[1] != kReserved[1] ||
        tokens[2] != kReserved[2] || tokens[3] != kReserved[3])
        throw ValidationError("Vocab: first four tokens must be the reserved ones");
    Vocab v;
    v.lang = lang;
    v.tokens = std::move(tokens);
    for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) {
        if (!v.index.emplace(v.tokens[static_cast<std::size_t>(i)], i).second)
            throw ValidationError("Vocab: duplicate token \"" +
                                  v.tokens[static_cast<std::size_t>(i)] + "\"");
    }
    return v;
}

int Vocab::id(const std::string &token) const {
    auto it = index.find(token);
    return it == index.end() ? unk : it->second;
}

std::vector<int> Vocab::encode(std::string_view text) const {
    std::vector<int> out;
    for (const auto &tok : surface_tokens(text, lang)) out.push_back(id(tok));
    return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
    std::string out;
    for (int i : ids) {
        if (i < 0 || i >= size()) throw ValidationError("decode: token id out of range");
        if (i == pad || i == bos || i == eos) continue;
        if (!out.empty()) out += ' ';
        out += tokens[static_cast<std::size_t>(i)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// RefModel

namespace {

struct Layout {
    // offsets into the flat parameter vector, in declaration order
    std::ptrdiff_t emb, w_ex, w_eh, b_e, w_dx, w_dh, b_d, w_i, b_i, w_o, b_o, total;
    Layout(int v, int e, int h) {
        std::ptrdiff_t off = 0;
        auto take = [&off](std::ptrdiff_t n) {
            std::ptrdiff_t at = off;
            off += n;
            return at;
        };
        emb = take(static_cast<std::ptrdiff_t>(v) * e);
        w_ex = take(static_cast<std::ptrdiff_t>(h) * e);
        w_eh = take(static_cast<std::ptrdiff_t>(h) * h);
        b_e = take(h);
        w_dx = take(static_cast<std::ptrdiff_t>(h) * e);
        w_dh = take(static_cast<std::ptrdiff_t>(h) * h);
        b_d = take(h);
        w_i = take(static_cast<std::ptrdiff_t>(h) * h);
        b_i = take(h);
        w_o = take(static_cast<std::ptrdiff_t>(v) * 2 * h);
        b_o = take(v);
        total = off;
    }
};

using CMap = Eigen::Map<const Eigen::MatrixXd>;
using MMap = Eigen::Map<Eigen::MatrixXd>;

struct Mats {
    CMap emb, w_ex, w_eh, w_dx, w_dh, w_i, w_o;
    Eigen::Map<const Eigen::VectorXd> b_e, b_d, b_i, b_o;
    Mats(const Eigen::VectorXd &p, const Layout &L, int v, int e, int h)
        : emb(p.data() + L.emb, v, e), w_ex(p.data() + L.w_ex, h, e),
          w_eh(p.data() + L.w_eh, h, h), w_dx(p.data() + L.w_dx, h, e),
          w_dh(p.data() + L.w_dh, h, h), w_i(p.data() + L.w_i, h, h),
          w_o(p.data() + L.w_o, v, 2 * h), b_e(p.data() + L.b_e, h), b_d(p.data() + L.b_d, h),
          b_i(p.data() + L.b_i, h), b_o(p.data() + L.b_o, v) {}
};

} // namespace

struct RefModel::Forward {
    std::vector<int> hist;              // after left truncation
    std::vector<int> inputs;            // decoder inputs: bos, out[0..T-2]
    Eigen::MatrixXd enc;                // H x L encoder states
    Eigen::VectorXd s0;
    std::vector<Eigen::VectorXd> state; // s_t, t = 0..T-1
    std::vector<Eigen::VectorXd> attn;  // attention weights over L
    std::vector<Eigen::VectorXd> ctx;   // attention contexts
    std::vector<Eigen::VectorXd> probs; // softmax outputs
};

std::size_t RefModel::param_count(int v, const RefModelConfig &c) {
    return static_cast<std::size_t>(Layout(v, c.embed_dim, c.hidden_dim).total);
}

RefModel::RefModel(Vocab vocab, RefModelConfig config)
    : vocab_(std::move(vocab)), config_(config) {
    if (config_.embed_dim < 1 || config_.hidden_dim < 1 || config_.max_input_len < 1 ||
        config_.max_output_len < 1)
        throw ConfigError("RefModel: sizes must be positive");
    params_.resize(static_cast<Eigen::Index>(param_count(vocab_.size(), config_)));
    std::mt19937_64 rng(config_.seed);
    for (Eigen::Index i = 0; i < params_.size(); ++i) params_[i] = uniform_pm(rng, 0.1);
}

Eigen::Map<Eigen::MatrixXd> RefModel::param_block(const std::string &name) {
    int v = vocab_.size(), e = config_.embed_dim, h = config_.hidden_dim;
    Layout L(v, e, h);
    double *base = params_.data();
    if (name == "Emb") return MMap(base + L.emb, v, e);
    if (name == "W_ex") return MMap(base + L.w_ex, h, e);
    if (name == "W_eh") return MMap(base + L.w_eh, h, h);
    if (name == "b_e") return MMap(base + L.b_e, h, 1);
    if (name == "W_dx") return MMap(base + L.w_dx, h, e);
    if (name == "W_dh") return MMap(base + L.w_dh, h, h);
    if (name == "b_d") return MMap(base + L.b_d, h, 1);
    if (name == "W_i") return MMap(base + L.w_i, h, h);
    if (name == "b_i") return MMap(base + L.b_i, h, 1);
    if (name == "W_o") return MMap(base + L.w_o, v, 2 * h);
    if (name == "b_o") return MMap(base + L.b_o, v, 1);
    throw ConfigError("unknown parameter block: " + name);
}

void RefModel::run_forward(std::span<const int> history_ids, std::span<const int> out_prefix,
                           Forward &fwd) const {
    int v = vocab_.size(), e = config_.embed_dim, h = config_.hidden_dim;
    Layout L(v, e, h);
    Mats m(params_, L, v, e, h);

    for (int id : history_ids)
        if (id < 0 || id >= v) throw ValidationError("history token id out of vocab range");
    for (int id : out_prefix)
        if (id < 0 || id >= v) throw ValidationError("output token id out of vocab range");

    // left truncation: keep the most recent max_input_len tokens
    std::size_t keep = std::min(history_ids.size(), static_cast<std::size_t>(config_.max_input_len));
    fwd.hist.assign(history_ids.end() - static_cast<std::ptrdiff_t>(keep), history_ids.end());
    if (fwd.hist.empty()) fwd.hist.push_back(Vocab::bos); // degenerate empty history

    std::size_t len = fwd.hist.size();
    fwd.enc.resize(h, static_cast<Eigen::Index>(len));
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(h);
    for (std::size_t j = 0; j < len; ++j) {
        Eigen::VectorXd pre = m.w_ex * m.emb.row(fwd.hist[j]).transpose() + m.w_eh * prev + m.b_e;
        fwd.enc.col(static_cast<Eigen::Index>(j)) = pre.array().tanh();
        prev = fwd.enc.col(static_cast<Eigen::Index>(j));
    }
    fwd.s0 = (m.w_i * prev + m.b_i).array().tanh();

    fwd.inputs.clear();
    fwd.inputs.push_back(Vocab::bos);
    fwd.inputs.insert(fwd.inputs.end(), out_prefix.begin(), out_prefix.end());

    std::size_t steps = fwd.inputs.size();
    fwd.state.resize(steps);
    fwd.attn.resize(steps);
    fwd.ctx.resize(steps);
    fwd.probs.resize(steps);
    Eigen::VectorXd s = fwd.s0;
    for (std::size_t t = 0; t < steps; ++t) {
        Eigen::VectorXd x = m.emb.row(fwd.inputs[t]).transpose();
        Eigen::VectorXd pre = m.w_dx * x + m.w_dh * s + m.b_d;
        s = pre.array().tanh();
        fwd.state[t] = s;
        Eigen::VectorXd scores = fwd.enc.transpose() * s;
        fwd.attn[t] = softmax(scores);
        fwd.ctx[t] = fwd.enc * fwd.attn[t];
        Eigen::VectorXd sc(2 * h);
        sc << s, fwd.ctx[t];
        fwd.probs[t] = softmax(m.w_o * sc + m.b_o);
    }
}

Eigen::VectorXd RefModel::next_token_dist(std::span<const int> history_ids,
                                          std::span<const int> prefix_ids) const {
    Forward fwd;
    run_forward(history_ids, prefix_ids, fwd);
    return fwd.probs.back();
}

std::vector<Eigen::VectorXd> RefModel::step_dists(std::span<const int> history_ids,
                                                  std::span<const int> out_tokens) const {
    if (out_tokens.empty()) throw ValidationError("step_dists: empty output sequence");
    Forward fwd;
    // inputs are bos + out_tokens[0..T-2]; the T distributions cover each position
    run_forward(history_ids, out_tokens.subspan(0, out_tokens.size() - 1), fwd);
    return fwd.probs;
}

void RefModel::backprop(std::span<const int> history_ids, std::span<const int> out_tokens,
                        const std::vector<Eigen::VectorXd> &dlogits,
                        Eigen::VectorXd &grad) const {
    if (out_tokens.empty() || dlogits.size() != out_tokens.size())
        throw ValidationError("backprop: dlogits must match output length");
    int v = vocab_.size(), e = config_.embed_dim, h = config_.hidden_dim;
    Layout L(v, e, h);
    Mats m(params_, L, v, e, h);
    if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());

    Forward fwd;
    run_forward(history_ids, out_tokens.subspan(0, out_tokens.size() - 1), fwd);

    MMap g_emb(grad.data() + L.emb, v, e);
    MMap g_w_ex(grad.data() + L.w_ex, h, e);
    MMap g_w_eh(grad.data() + L.w_eh, h, h);
    Eigen::Map<Eigen::VectorXd> g_b_e(grad.data() + L.b_e, h);
    MMap g_w_dx(grad.data() + L.w_dx, h, e);
    MMap g_w_dh(grad.data() + L.w_dh, h, h);
    Eigen::Map<Eigen::VectorXd> g_b_d(grad.data() + L.b_d, h);
    MMap g_w_i(grad.data() + L.w_i, h, h);
    Eigen::Map<Eigen::VectorXd> g_b_i(grad.data() + L.b_i, h);
    MMap g_w_o(grad.data() + L.w_o, v, 2 * h);
    Eigen::Map<Eigen::VectorXd> g_b_o(grad.data() + L.b_o, v);

    std::size_t steps = fwd.inputs.size();
    Eigen::Index len = fwd.enc.cols();
    Eigen::MatrixXd d_enc = Eigen::MatrixXd::Zero(h, len);
    Eigen::VectorXd ds_carry = Eigen::VectorXd::Zero(h);

    for (std::size_t t = steps; t-- > 0;) {
        const Eigen::VectorXd &dz = dlogits[t];
        const Eigen::VectorXd &s = fwd.state[t];
        const Eigen::VectorXd &a = fwd.attn[t];
        Eigen::VectorXd sc(2 * h);
        sc << s, fwd.ctx[t];
        g_w_o += dz * sc.transpose();
        g_b_o += dz;
        Eigen::VectorXd dsc = m.w_o.transpose() * dz;
        Eigen::VectorXd ds = dsc.head(h) + ds_carry;
        Eigen::VectorXd dc = dsc.tail(h);

        // context c = enc * a
        Eigen::VectorXd da = fwd.enc.transpose() * dc;
        d_enc += dc * a.transpose();
        // softmax over attention scores
        Eigen::VectorXd du = a.array() * (da.array() - a.dot(da));
        // scores u_j = enc_j . s
        ds += fwd.enc * du;
        d_enc += s * du.transpose();

        // decoder tanh cell
        Eigen::VectorXd dpre = (1.0 - s.array().square()) * ds.array();
        Eigen::VectorXd x = m.emb.row(fwd.inputs[t]).transpose();
        const Eigen::VectorXd &s_prev = t == 0 ? fwd.s0 : fwd.state[t - 1];
        g_w_dx += dpre * x.transpose();
        g_w_dh += dpre * s_prev.transpose();
        g_b_d += dpre;
        g_emb.row(fwd.inputs[t]) += (m.w_dx.transpose() * dpre).transpose();
        ds_carry = m.w_dh.transpose() * dpre;
    }

    // initial decoder state
    Eigen::VectorXd dpre0 = (1.0 - fwd.s0.array().square()) * ds_carry.array();
    g_w_i += dpre0 * fwd.enc.col(len - 1).transpose();
    g_b_i += dpre0;
    d_enc.col(len - 1) += m.w_i.transpose() * dpre0;

    // encoder chain, right to left
    Eigen::VectorXd dm_carry = Eigen::VectorXd::Zero(h);
    for (Eigen::Index j = len; j-- > 0;) {
        Eigen::VectorXd dm = d_enc.col(j) + dm_carry;
        Eigen::VectorXd dpre = (1.0 - fwd.enc.col(j).array().square()) * dm.array();
        Eigen::VectorXd x = m.emb.row(fwd.hist[static_cast<std::size_t>(j)]).transpose();
        g_w_ex += dpre * x.transpose();
        if (j > 0) g_w_eh += dpre * fwd.enc.col(j - 1).transpose();
        g_b_e += dpre;
        g_emb.row(fwd.hist[static_cast<std::size_t>(j)]) +=
            (m.w_ex.transpose() * dpre).transpose();
        dm_carry = m.w_eh.transpose() * dpre;
    }
}

void RefModel::save(const std::filesystem::path &path) const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"] = {{"embed_dim", config_.embed_dim},
                   {"hidden_dim", config_.hidden_dim},
                   {"max_input_len", config_.max_input_len},
                   {"max_output_len", config_.max_output_len},
                   {"seed", config_.seed}};
    j["vocab"] = vocab_.tokens;
    j["lang"] = vocab_.lang == Lang::en ? "en" : "zh";
    j["params"] = std::vector<double>(params_.data(), params_.data() + params_.size());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
    out << j.dump() << '\n';
}

RefModel RefModel::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("format_version") || j["format_version"] != 1)
        throw ParseError("unrecognized checkpoint format: " + path.string());
    RefModelConfig cfg;
    cfg.embed_dim = j["config"]["embed_dim"];
    cfg.hidden_dim = j["config"]["hidden_dim"];
    cfg.max_input_len = j["config"]["max_input_len"];
    cfg.max_output_len = j["config"]["max_output_len"];
    cfg.seed = j["config"]["seed"];
    Vocab vocab = Vocab::from_tokens(j["vocab"].get<std::vector<std::string>>(),
                                     j["lang"] == "zh" ? Lang::zh : Lang::en);
    RefModel model(std::move(vocab), cfg);
    std::vector<double> p = j["params"].get<std::vector<double>>();
    if (p.size() != static_cast<std::size_t>(model.params_.size()))
        throw ParseError("checkpoint parameter count mismatch: " + path.string());
    model.params_ = Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
    return model;
}

// ---------------------------------------------------------------------------
// Decoding and diagnostics

namespace {

struct SearchNode {
    double logprob;
    std::vector<int> tokens;
    bool closed; // ends in eos
};

struct NodeOrder {
    // priority_queue pops the "largest": highest logprob first, then
    // lexicographically smallest token sequence.
    bool operator()(const SearchNode &a, const SearchNode &b) const {
        if (a.logprob != b.logprob) return a.logprob < b.logprob;
        return a.tokens > b.tokens;
    }
};

} // namespace

std::vector<BeamCandidate> beam_search(const Seq2seqModel &model,
                                       std::span<const int> history_ids, int beam_width,
                                       int max_len) {
    if (beam_width < 1) throw ValidationError("beam_search: beam width must be >= 1");
    const Vocab &vocab = model.vocab();
    int v = vocab.size();

    std::priority_queue<SearchNode, std::vector<SearchNode>, NodeOrder> frontier;
    frontier.push({0.0, {}, false});
    std::vector<BeamCandidate> out;
    constexpr long kMaxExpansions = 500000; // safety valve, never hit at sane sizes
    long expansions = 0;

    while (!frontier.empty() && static_cast<int>(out.size()) < beam_width &&
           expansions < kMaxExpansions) {
        SearchNode node = frontier.top();
        frontier.pop();
        if (node.closed) {
            BeamCandidate cand;
            cand.logprob = node.logprob;
            cand.text = vocab.decode(node.tokens);
            cand.tokens = std::move(node.tokens);
            out.push_back(std::move(cand));
            continue;
        }
        ++expansions;
        Eigen::VectorXd dist = model.next_token_dist(history_ids, node.tokens);
        if (static_cast<int>(node.tokens.size()) >= max_len) {
            // out of budget: close with eos
            double p = dist[Vocab::eos];
            if (p > 0) {
                node.tokens.push_back(Vocab::eos);
                frontier.push({node.logprob + std::log(p), std::move(node.tokens), true});
            }
            continue;
        }
        for (int tok = 0; tok < v; ++tok) {
            if (tok == Vocab::pad || tok == Vocab::bos) continue;
            double p = dist[tok];
            if (p <= 0) continue;
            std::vector<int> next = node.tokens;
            next.push_back(tok);
            frontier.push({node.logprob + std::log(p), std::move(next), tok == Vocab::eos});
        }
    }
    return out;
}

double entropy(const Eigen::VectorXd &dist) {
    double h = 0;
    for (Eigen::Index i = 0; i < dist.size(); ++i)
        if (dist[i] > 0) h -= dist[i] * std::log(dist[i]);
    return h;
}

double mean_predictive_entropy(const Seq2seqModel &model,
                               const std::vector<DialogueExample> &examples) {
    if (examples.empty()) throw ValidationError("mean_predictive_entropy: empty example list");
    const Vocab &vocab = model.vocab();
    const auto *trainable = dynamic_cast<const TrainableModel *>(&model);
    double total = 0;
    std::size_t positions = 0;
    for (const auto &ex : examples) {
        std::vector<int> hist = vocab.encode(concat_history(ex.turns));
        std::vector<int> gold = vocab.encode(ex.gold_query);
        gold.push_back(Vocab::eos);
        if (trainable) {
            for (const auto &dist : trainable->step_dists(hist, gold)) {
                total += entropy(dist);
                ++positions;
            }
        } else {
            for (std::size_t i = 0; i < gold.size(); ++i) {
                total += entropy(model.next_token_dist(
                    hist, std::span<const int>(gold.data(), i)));
                ++positions;
            }
        }
    }
    return total / static_cast<double>(positions);
}

} // namespace qgen
