// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "toxprompt/stub_lm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <unordered_map>
#include <utility>

#include "autodiff.hpp"
#include "toxprompt/errors.hpp"
#include "toxprompt/util.hpp"

namespace toxprompt {

using detail::Index;
using detail::Mat;
using detail::Tape;
using Var = Tape::Var;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct AttnWeights {
    Mat wq, wk, wv, wo;
};

struct LayerWeights {
    AttnWeights self;
    std::optional<AttnWeights> cross;
    Mat w1, w2;
};

Mat uniform_mat(Rng& rng, Index rows, Index cols, double half_width) {
    Mat m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-half_width, half_width);
    }
    return m;
}

Mat near_identity(Rng& rng, Index d, double noise) {
    Mat m = uniform_mat(rng, d, d, noise);
    m += Mat::Identity(d, d);
    return m;
}

AttnWeights init_attention(Rng& rng, Index d, double value_noise) {
    const double qk = std::sqrt(3.0 / static_cast<double>(d));
    AttnWeights w;
    w.wq = uniform_mat(rng, d, d, qk);
    w.wk = uniform_mat(rng, d, d, qk);
    w.wv = near_identity(rng, d, value_noise);
    w.wo = near_identity(rng, d, value_noise);
    return w;
}

/// Row-major float buffer -> matrix.
Mat to_mat(std::span<const float> v, std::size_t rows, std::size_t cols) {
    Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = v[r * cols + c];
    }
    return m;
}

std::vector<double> to_row_major(const Mat& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
    return out;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
    const double m = z.maxCoeff();
    if (!std::isfinite(m)) return Eigen::VectorXd::Constant(z.size(), kNegInf);
    const double lse = m + std::log((z.array() - m).exp().sum());
    return (z.array() - lse).matrix();
}

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = static_cast<int>(i);
    }
    return best;
}

/// Prompt tensors placed on a tape.
struct PromptVars {
    std::optional<Var> soft;
    std::vector<std::pair<Var, Var>> prefix;  // per layer: keys, values
    std::vector<Var> leaves;
};

PromptVars place_prompt(Tape& tape, const PromptParams& prompt, bool trainable) {
    PromptVars pv;
    auto leaf = [&](Mat m) {
        const Var v = trainable ? tape.parameter(std::move(m)) : tape.constant(std::move(m));
        pv.leaves.push_back(v);
        return v;
    };
    const std::size_t d = prompt.d_model;
    const std::size_t len = prompt.length;
    switch (prompt.method) {
        case PromptMethod::none:
            break;
        case PromptMethod::soft:
            pv.soft = leaf(to_mat(prompt.values, len, d));
            break;
        case PromptMethod::prefix: {
            const std::size_t layers = prompt.num_layers;
            if (prompt.reparam) {
                const auto& r = *prompt.reparam;
                const std::size_t out = layers * 2 * d;
                const Var seed = leaf(to_mat(r.seed, len, d));
                const Var w1 = leaf(to_mat(r.w1, d, r.hidden));
                const Var b1 = leaf(to_mat(r.b1, 1, r.hidden));
                const Var w2 = leaf(to_mat(r.w2, r.hidden, out));
                const Var b2 = leaf(to_mat(r.b2, 1, out));
                const Var hidden = tape.tanh(tape.add_row(tape.matmul(seed, w1), b1));
                const Var flat = tape.add_row(tape.matmul(hidden, w2), b2);
                for (std::size_t l = 0; l < layers; ++l) {
                    pv.prefix.emplace_back(
                        tape.col_block(flat, static_cast<Index>((2 * l) * d), static_cast<Index>(d)),
                        tape.col_block(flat, static_cast<Index>((2 * l + 1) * d), static_cast<Index>(d)));
                }
            } else {
                const Var all = leaf(to_mat(prompt.values, layers * 2 * len, d));
                for (std::size_t l = 0; l < layers; ++l) {
                    pv.prefix.emplace_back(
                        tape.row_block(all, static_cast<Index>((2 * l) * len), static_cast<Index>(len)),
                        tape.row_block(all, static_cast<Index>((2 * l + 1) * len), static_cast<Index>(len)));
                }
            }
            break;
        }
    }
    return pv;
}

}  // namespace

struct detail::TableLMWeights {
    Mat embed;  // vocab x d
    Mat pos;    // max_context x d
    std::vector<LayerWeights> encoder;
    std::vector<LayerWeights> decoder;
    std::unordered_map<int, std::vector<std::pair<int, double>>> transitions;

    template <typename F>
    void for_each_matrix(F&& f) {
        f(embed);
        f(pos);
        for (auto* stack : {&encoder, &decoder}) {
            for (auto& layer : *stack) {
                f(layer.self.wq), f(layer.self.wk), f(layer.self.wv), f(layer.self.wo);
                if (layer.cross) {
                    f(layer.cross->wq), f(layer.cross->wk), f(layer.cross->wv), f(layer.cross->wo);
                }
                f(layer.w1), f(layer.w2);
            }
        }
    }
};

TableLM::TableLM(TableLMConfig config, WordByteTokenizer tokenizer)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)), weights_(std::make_unique<detail::TableLMWeights>()) {
    if (config_.d_model == 0 || config_.heads == 0 || config_.d_model % config_.heads != 0) {
        throw std::invalid_argument("TableLM: d_model must be a positive multiple of heads");
    }
    const auto d = static_cast<Index>(config_.d_model);
    const auto f = static_cast<Index>(config_.ffn);
    Rng rng(config_.seed);
    auto& w = *weights_;
    w.embed = uniform_mat(rng, static_cast<Index>(tokenizer_.vocab_size()), d, config_.embed_scale);
    w.pos = uniform_mat(rng, static_cast<Index>(config_.max_context), d, config_.position_scale);
    auto make_layer = [&](bool cross) {
        LayerWeights layer;
        layer.self = init_attention(rng, d, config_.value_noise);
        if (cross) layer.cross = init_attention(rng, d, config_.value_noise);
        layer.w1 = uniform_mat(rng, d, f, config_.ffn_scale);
        layer.w2 = uniform_mat(rng, f, d, config_.ffn_scale);
        return layer;
    };
    const bool enc_dec = config_.family == ModelFamily::encoder_decoder;
    if (enc_dec) {
        for (std::size_t l = 0; l < config_.layers; ++l) w.encoder.push_back(make_layer(false));
    }
    for (std::size_t l = 0; l < config_.layers; ++l) w.decoder.push_back(make_layer(enc_dec));

    for (const auto& shift : config_.embedding_shifts) {
        const int id = tokenizer_.word_id(shift.word);
        if (id < 0) throw std::invalid_argument("TableLM: embedding shift for unknown word " + shift.word);
        if (shift.axis >= config_.d_model) throw std::invalid_argument("TableLM: embedding shift axis");
        w.embed(id, static_cast<Index>(shift.axis)) += shift.amount;
    }
    finish_init();
}

TableLM::TableLM(TableLMConfig config, WordByteTokenizer tokenizer, std::unique_ptr<detail::TableLMWeights> weights)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)), weights_(std::move(weights)) {
    finish_init();
}

TableLM::~TableLM() = default;

void TableLM::finish_init() {
    auto resolve = [&](const std::string& word) {
        if (word == "<pad>") return WordByteTokenizer::kPad;
        if (word == "<eos>") return WordByteTokenizer::kEos;
        if (word == "<sep>") return WordByteTokenizer::kSep;
        const int id = tokenizer_.word_id(word);
        if (id < 0) throw std::invalid_argument("TableLM: transition references unknown word " + word);
        return id;
    };
    weights_->transitions.clear();
    for (const auto& t : config_.transitions) {
        weights_->transitions[resolve(t.from)].emplace_back(resolve(t.to), t.score);
    }
    descriptor_.name = config_.family == ModelFamily::encoder_decoder ? "stub" : "stub-decoder";
    descriptor_.family = config_.family;
    descriptor_.num_layers =
        config_.family == ModelFamily::encoder_decoder ? 2 * config_.layers : config_.layers;
    descriptor_.d_model = config_.d_model;
    descriptor_.vocab_size = tokenizer_.vocab_size();
    descriptor_.max_context = config_.max_context;
    descriptor_.frozen_fingerprint = compute_fingerprint();
}

std::string TableLM::compute_fingerprint() const {
    Sha256 h;
    h.update("TableLM|" + to_string(config_.family) + "|" + std::to_string(config_.d_model) + "|" +
             std::to_string(config_.heads) + "|" + std::to_string(config_.layers) + "|" +
             std::to_string(config_.ffn) + "|" + std::to_string(config_.max_context) + "|");
    for (const auto& word : tokenizer_.words()) h.update(word).update("\n");
    // const_cast: for_each_matrix only reads here.
    const_cast<detail::TableLMWeights&>(*weights_).for_each_matrix([&](const Mat& m) {
        h.update_pod(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
    });
    for (const auto& t : config_.transitions) {
        h.update(t.from + "\t" + t.to + "\t");
        h.update_pod(std::span<const double>(&t.score, 1));
    }
    return h.hex_digest();
}

std::vector<float> TableLM::token_embedding(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokenizer_.vocab_size()) {
        throw std::out_of_range("TableLM::token_embedding: id " + std::to_string(id));
    }
    std::vector<float> out(config_.d_model);
    for (std::size_t c = 0; c < config_.d_model; ++c) {
        out[c] = static_cast<float>(weights_->embed(id, static_cast<Index>(c)));
    }
    return out;
}

namespace {

/// Forward pass of one attention sub-layer.
Var attention(Tape& t, Var xq, Var xkv, const AttnWeights& w, const std::pair<Var, Var>* prefix,
              bool causal, std::size_t heads) {
    const Var q = t.matmul(xq, t.constant_ref(w.wq));
    Var k = t.matmul(xkv, t.constant_ref(w.wk));
    Var v = t.matmul(xkv, t.constant_ref(w.wv));
    Index prefix_len = 0;
    if (prefix) {
        prefix_len = t.value(prefix->first).rows();
        k = t.concat_rows(prefix->first, k);
        v = t.concat_rows(prefix->second, v);
    }
    const Index tq = t.value(q).rows();
    const Index tk = t.value(k).rows();
    std::optional<Mat> mask;
    if (causal) {
        mask = Mat::Zero(tq, tk);
        for (Index i = 0; i < tq; ++i) {
            for (Index j = prefix_len + i + 1; j < tk; ++j) (*mask)(i, j) = kNegInf;
        }
    }
    const Index d = t.value(q).cols();
    const Index dh = d / static_cast<Index>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    for (std::size_t h = 0; h < heads; ++h) {
        const Index c = static_cast<Index>(h) * dh;
        const Var scores = t.scale(t.matmul_nt(t.col_block(q, c, dh), t.col_block(k, c, dh)), scale);
        const Var p = t.softmax_rows(scores, mask ? &*mask : nullptr);
        outs.push_back(t.matmul(p, t.col_block(v, c, dh)));
    }
    const Var joined = heads == 1 ? outs.front() : t.concat_cols(outs);
    return t.matmul(joined, t.constant_ref(w.wo));
}

Var feed_forward(Tape& t, Var x, const LayerWeights& w) {
    return t.matmul(t.gelu(t.matmul(x, t.constant_ref(w.w1))), t.constant_ref(w.w2));
}

}  // namespace

namespace {

// Computes next-token logits for every position of `dec_in` (the token preceding each
// prediction: <pad>/<sep> followed by the teacher-forced target prefix).
Var run_core(Tape& tape, const TableLMConfig& cfg, const detail::TableLMWeights& w, const PromptVars& pv,
             std::span<const int> input_ids, std::span<const int> dec_in) {
    const Index d = static_cast<Index>(cfg.d_model);
    auto embed_rows = [&](std::span<const int> ids, Index pos0) {
        Mat m(static_cast<Index>(ids.size()), d);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            m.row(static_cast<Index>(i)) = w.embed.row(ids[i]) + w.pos.row(pos0 + static_cast<Index>(i));
        }
        return tape.constant(std::move(m));
    };
    auto with_soft = [&](Var body, Index soft_len) {
        if (!pv.soft) return body;
        const Var soft = tape.add(*pv.soft, tape.constant(w.pos.topRows(soft_len)));
        return tape.concat_rows(soft, body);
    };
    const Index soft_len = pv.soft ? tape.value(*pv.soft).rows() : 0;
    const Var embed_t = tape.constant_ref(w.embed);

    Var out;
    if (cfg.family == ModelFamily::encoder_decoder) {
        std::vector<int> enc_ids(input_ids.begin(), input_ids.end());
        enc_ids.push_back(WordByteTokenizer::kEos);
        Var enc = with_soft(embed_rows(enc_ids, soft_len), soft_len);
        for (std::size_t l = 0; l < w.encoder.size(); ++l) {
            const auto* prefix = pv.prefix.empty() ? nullptr : &pv.prefix[l];
            enc = tape.add(enc, attention(tape, enc, enc, w.encoder[l].self, prefix, false, cfg.heads));
            enc = tape.add(enc, feed_forward(tape, enc, w.encoder[l]));
        }
        Var dec = embed_rows(dec_in, 0);
        const std::size_t offset = w.encoder.size();
        for (std::size_t l = 0; l < w.decoder.size(); ++l) {
            const auto* prefix = pv.prefix.empty() ? nullptr : &pv.prefix[offset + l];
            dec = tape.add(dec, attention(tape, dec, dec, w.decoder[l].self, prefix, true, cfg.heads));
            dec = tape.add(dec, attention(tape, dec, enc, *w.decoder[l].cross, nullptr, false, cfg.heads));
            dec = tape.add(dec, feed_forward(tape, dec, w.decoder[l]));
        }
        out = dec;
    } else {
        std::vector<int> ids(input_ids.begin(), input_ids.end());
        ids.insert(ids.end(), dec_in.begin(), dec_in.end());
        Var x = with_soft(embed_rows(ids, soft_len), soft_len);
        for (std::size_t l = 0; l < w.decoder.size(); ++l) {
            const auto* prefix = pv.prefix.empty() ? nullptr : &pv.prefix[l];
            x = tape.add(x, attention(tape, x, x, w.decoder[l].self, prefix, true, cfg.heads));
            x = tape.add(x, feed_forward(tape, x, w.decoder[l]));
        }
        const Index rows = static_cast<Index>(dec_in.size());
        out = tape.row_block(x, tape.value(x).rows() - rows, rows);
    }

    // Tied output layer, rescaled by d^-1/2 as in T5.
    Var logits = tape.scale(tape.matmul_nt(out, embed_t), 1.0 / std::sqrt(static_cast<double>(d)));
    Mat bias = Mat::Zero(static_cast<Index>(dec_in.size()), w.embed.rows());
    bool any_bias = false;
    for (std::size_t i = 0; i < dec_in.size(); ++i) {
        auto it = w.transitions.find(dec_in[i]);
        if (it == w.transitions.end()) continue;
        for (const auto& [to, score] : it->second) bias(static_cast<Index>(i), to) += score;
        any_bias = true;
    }
    if (any_bias) logits = tape.add(logits, tape.constant(std::move(bias)));
    return logits;
}

void check_context(const TableLMConfig& cfg, const PromptParams& prompt, std::size_t input_len,
                   std::size_t dec_len) {
    const std::size_t span = prompt_span(prompt);
    if (cfg.family == ModelFamily::encoder_decoder) {
        if (span + input_len + 1 > cfg.max_context) {
            throw ContextOverflow("prompt " + std::to_string(span) + " + input " +
                                  std::to_string(input_len) + " + <eos> exceeds context " +
                                  std::to_string(cfg.max_context));
        }
        if (dec_len > cfg.max_context) {
            throw ContextOverflow("target length " + std::to_string(dec_len) + " exceeds context " +
                                  std::to_string(cfg.max_context));
        }
    } else if (span + input_len + dec_len > cfg.max_context) {
        throw ContextOverflow("prompt " + std::to_string(span) + " + input " + std::to_string(input_len) +
                              " + target " + std::to_string(dec_len) + " exceeds context " +
                              std::to_string(cfg.max_context));
    }
}

int start_token(ModelFamily family) {
    return family == ModelFamily::encoder_decoder ? WordByteTokenizer::kPad : WordByteTokenizer::kSep;
}

}  // namespace

ForwardOutput TableLM::forward_with_prompt(const PromptParams& prompt, const TokenSeq& input,
                                           const TokenSeq& target, GradMode mode) const {
    check_prompt_shape(prompt, descriptor_);
    std::vector<int> dec_in;
    dec_in.push_back(start_token(config_.family));
    if (!target.ids.empty()) dec_in.insert(dec_in.end(), target.ids.begin(), target.ids.end() - 1);
    check_context(config_, prompt, input.ids.size(), target.ids.size());

    ForwardOutput result;
    const bool want_grad = mode == GradMode::prompt;
    if (target.ids.empty()) {
        result.log_probs = Mat(0, static_cast<Index>(descriptor_.vocab_size));
        if (want_grad) {
            for (auto n : trainable_block_sizes(prompt)) result.prompt_grad.emplace_back(n, 0.0);
        }
        return result;
    }
    dec_in.resize(target.ids.size());

    Tape tape;
    const PromptVars pv = place_prompt(tape, prompt, want_grad);
    const Var logits = run_core(tape, config_, *weights_, pv, input.ids, dec_in);
    const Var loss = tape.nll_sum(logits, target.ids, &result.log_probs);
    result.loss = tape.value(loss)(0, 0);
    if (want_grad) {
        tape.backward(loss);
        for (const Var leaf : pv.leaves) result.prompt_grad.push_back(to_row_major(tape.grad(leaf)));
    }
    return result;
}

Eigen::VectorXd TableLM::next_log_probs(const PromptParams& prompt, const TokenSeq& input,
                                        const std::vector<int>& generated) const {
    std::vector<int> dec_in;
    dec_in.push_back(start_token(config_.family));
    dec_in.insert(dec_in.end(), generated.begin(), generated.end());
    Tape tape;
    const PromptVars pv = place_prompt(tape, prompt, false);
    const Var logits = run_core(tape, config_, *weights_, pv, input.ids, dec_in);
    const Mat& z = tape.value(logits);
    return log_softmax(z.row(z.rows() - 1).transpose());
}

std::string TableLM::generate(const PromptParams& prompt, const TokenSeq& input,
                              const DecodeConfig& cfg) const {
    check_prompt_shape(prompt, descriptor_);
    check_context(config_, prompt, input.ids.size(), 1);
    // Generated length is bounded by the decoder's remaining positions.
    std::size_t limit = cfg.max_len;
    if (config_.family == ModelFamily::encoder_decoder) {
        limit = std::min(limit, config_.max_context - 1);
    } else {
        limit = std::min(limit, config_.max_context - prompt_span(prompt) - input.ids.size() - 1);
    }
    if (limit == 0) return "";

    if (cfg.beam_width <= 1) {
        std::vector<int> out;
        while (out.size() < limit) {
            const int next = argmax_lowest(next_log_probs(prompt, input, out));
            if (next == WordByteTokenizer::kEos) break;
            out.push_back(next);
        }
        return tokenizer_.decode(out);
    }

    struct Beam {
        std::vector<int> ids;
        double score = 0.0;
        bool done = false;
    };
    auto better = [](const Beam& a, const Beam& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.ids < b.ids;
    };
    std::vector<Beam> beams{Beam{}};
    for (std::size_t step = 0; step < limit; ++step) {
        std::vector<Beam> candidates;
        bool expanded = false;
        for (const auto& beam : beams) {
            if (beam.done) {
                candidates.push_back(beam);
                continue;
            }
            expanded = true;
            const Eigen::VectorXd lp = next_log_probs(prompt, input, beam.ids);
            std::vector<int> order(static_cast<std::size_t>(lp.size()));
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
            const std::size_t k = std::min(cfg.beam_width, order.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                              [&](int a, int b) { return lp(a) != lp(b) ? lp(a) > lp(b) : a < b; });
            for (std::size_t i = 0; i < k; ++i) {
                Beam next = beam;
                next.score += lp(order[i]);
                if (order[i] == WordByteTokenizer::kEos) {
                    next.done = true;
                } else {
                    next.ids.push_back(order[i]);
                }
                candidates.push_back(std::move(next));
            }
        }
        if (!expanded) break;
        std::sort(candidates.begin(), candidates.end(), better);
        candidates.resize(std::min(cfg.beam_width, candidates.size()));
        beams = std::move(candidates);
    }
    return tokenizer_.decode(beams.front().ids);
}

double TableLM::score_perplexity(std::string_view text) const {
    const TokenSeq ids = tokenizer_.encode(text);
    if (ids.empty()) throw EmptyText("cannot score the perplexity of empty text");
    const auto out = forward_with_prompt(PromptParams::none(), TokenSeq{}, ids, GradMode::none);
    return std::exp(out.loss / static_cast<double>(ids.size()));
}

// ---------------------------------------------------------------------------
// Weights file: one JSON header line, then every matrix as row-major float64 (little endian).

void TableLM::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["format"] = "toxprompt-tablelm";
    header["format_version"] = 1;
    header["family"] = to_string(config_.family);
    header["d_model"] = config_.d_model;
    header["heads"] = config_.heads;
    header["layers"] = config_.layers;
    header["ffn"] = config_.ffn;
    header["max_context"] = config_.max_context;
    header["seed"] = config_.seed;
    header["words"] = tokenizer_.words();
    auto& transitions = header["transitions"] = nlohmann::json::array();
    for (const auto& t : config_.transitions) transitions.push_back({t.from, t.to, t.score});
    header["fingerprint"] = descriptor_.frozen_fingerprint;

    std::string blob = header.dump();
    blob.push_back('\n');
    const_cast<detail::TableLMWeights&>(*weights_).for_each_matrix([&](const Mat& m) {
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) {
                const double v = m(r, c);
                char bytes[sizeof(double)];
                std::memcpy(bytes, &v, sizeof(double));
                blob.append(bytes, sizeof(double));
            }
        }
    });
    write_file_atomic(path, blob);
}

std::shared_ptr<TableLM> TableLM::load(const std::filesystem::path& path) {
    const std::string blob = read_file(path);
    const auto newline = blob.find('\n');
    if (newline == std::string::npos) throw SchemaError(path.string(), 0, "missing weights header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(0, newline));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string(), 1, e.what());
    }
    if (header.value("format", "") != "toxprompt-tablelm") {
        throw SchemaError(path.string(), 1, "not a stub weights file");
    }
    TableLMConfig cfg;
    cfg.family = model_family_from_string(header.at("family").get<std::string>());
    cfg.d_model = header.at("d_model");
    cfg.heads = header.at("heads");
    cfg.layers = header.at("layers");
    cfg.ffn = header.at("ffn");
    cfg.max_context = header.at("max_context");
    cfg.seed = header.at("seed");
    for (const auto& t : header.at("transitions")) {
        cfg.transitions.push_back({t.at(0).get<std::string>(), t.at(1).get<std::string>(), t.at(2).get<double>()});
    }
    WordByteTokenizer tok(header.at("words").get<std::vector<std::string>>());

    // Shapes come from a freshly initialised model; values are then overwritten.
    auto shaped = std::make_shared<TableLM>(cfg, tok);
    auto weights = std::make_unique<detail::TableLMWeights>(*shaped->weights_);
    std::size_t at = newline + 1;
    bool short_read = false;
    weights->for_each_matrix([&](Mat& m) {
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) {
                if (at + sizeof(double) > blob.size()) {
                    short_read = true;
                    return;
                }
                std::memcpy(&m(r, c), blob.data() + at, sizeof(double));
                at += sizeof(double);
            }
        }
    });
    if (short_read || at != blob.size()) throw SchemaError(path.string(), 0, "weights payload size mismatch");
    std::shared_ptr<TableLM> model(new TableLM(cfg, std::move(tok), std::move(weights)));
    if (header.contains("fingerprint") &&
        header["fingerprint"].get<std::string>() != model->descriptor().frozen_fingerprint) {
        throw FingerprintMismatch("weights file digest does not match its header");
    }
    return model;
}

// ---------------------------------------------------------------------------
// ScriptedLM

ScriptedLM::ScriptedLM(std::string name, WordByteTokenizer tokenizer, Rule rule, ModelFamily family,
                       std::size_t d_model, std::size_t num_layers, std::size_t max_context)
    : tokenizer_(std::move(tokenizer)), rule_(std::move(rule)) {
    descriptor_.name = std::move(name);
    descriptor_.family = family;
    descriptor_.d_model = d_model;
    descriptor_.num_layers = num_layers;
    descriptor_.vocab_size = tokenizer_.vocab_size();
    descriptor_.max_context = max_context;
    descriptor_.frozen_fingerprint = compute_fingerprint();
}

std::shared_ptr<ScriptedLM> ScriptedLM::uniform(WordByteTokenizer tokenizer) {
    return std::make_shared<ScriptedLM>(
        "uniform", std::move(tokenizer),
        [](std::span<const int>, std::span<const int>) { return std::vector<double>{}; });
}

std::shared_ptr<ScriptedLM> ScriptedLM::rewriter(WordByteTokenizer tokenizer,
                                                 std::function<std::string(std::string_view)> rewrite,
                                                 std::string name) {
    auto tok = tokenizer;
    const std::size_t vocab = tokenizer.vocab_size();
    Rule rule = [tok, rewrite, vocab](std::span<const int> input, std::span<const int> generated) {
        std::vector<int> target = tok.encode(rewrite(tok.decode(input))).ids;
        target.push_back(WordByteTokenizer::kEos);
        const std::size_t at = std::min(generated.size(), target.size() - 1);
        std::vector<double> logits(vocab, kNegInf);
        logits[static_cast<std::size_t>(target[at])] = 0.0;
        return logits;
    };
    return std::make_shared<ScriptedLM>(std::move(name), std::move(tokenizer), std::move(rule));
}

std::shared_ptr<ScriptedLM> ScriptedLM::echo(WordByteTokenizer tokenizer) {
    return rewriter(std::move(tokenizer), [](std::string_view s) { return std::string(s); }, "echo");
}

std::shared_ptr<ScriptedLM> ScriptedLM::keyword_classifier(WordByteTokenizer tokenizer,
                                                           const std::string& keyword,
                                                           const std::string& yes_word,
                                                           const std::string& no_word, double margin) {
    const int key = tokenizer.word_id(keyword);
    const int yes = tokenizer.word_id(yes_word);
    const int no = tokenizer.word_id(no_word);
    if (key < 0 || yes < 0 || no < 0) {
        throw std::invalid_argument("keyword_classifier: words must be in the vocabulary");
    }
    const std::size_t vocab = tokenizer.vocab_size();
    Rule rule = [=](std::span<const int> input, std::span<const int> generated) {
        std::vector<double> logits(vocab, 0.0);
        if (!generated.empty()) {
            std::fill(logits.begin(), logits.end(), kNegInf);
            logits[WordByteTokenizer::kEos] = 0.0;
            return logits;
        }
        const bool marked = std::find(input.begin(), input.end(), key) != input.end();
        logits[static_cast<std::size_t>(marked ? yes : no)] = margin;
        return logits;
    };
    return std::make_shared<ScriptedLM>("keyword:" + keyword, std::move(tokenizer), std::move(rule));
}

std::string ScriptedLM::compute_fingerprint() const {
    Sha256 h;
    h.update("ScriptedLM|" + descriptor_.name + "|" + to_string(descriptor_.family) + "|");
    for (const auto& word : tokenizer_.words()) h.update(word).update("\n");
    return h.hex_digest();
}

Eigen::VectorXd ScriptedLM::log_probs(std::span<const int> input, std::span<const int> generated) const {
    std::vector<double> logits = rule_(input, generated);
    if (logits.empty()) logits.assign(tokenizer_.vocab_size(), 0.0);
    if (logits.size() != tokenizer_.vocab_size()) {
        throw std::logic_error("ScriptedLM rule returned " + std::to_string(logits.size()) + " logits");
    }
    return log_softmax(Eigen::Map<const Eigen::VectorXd>(logits.data(), static_cast<Index>(logits.size())));
}

ForwardOutput ScriptedLM::forward_with_prompt(const PromptParams& prompt, const TokenSeq& input,
                                              const TokenSeq& target, GradMode mode) const {
    check_prompt_shape(prompt, descriptor_);
    if (prompt_span(prompt) + input.size() + 1 > descriptor_.max_context) {
        throw ContextOverflow("prompt + input exceeds context " + std::to_string(descriptor_.max_context));
    }
    ForwardOutput out;
    out.log_probs = Mat(static_cast<Index>(target.size()), static_cast<Index>(tokenizer_.vocab_size()));
    for (std::size_t t = 0; t < target.size(); ++t) {
        const Eigen::VectorXd lp = log_probs(input.ids, std::span<const int>(target.ids.data(), t));
        out.log_probs.row(static_cast<Index>(t)) = lp.transpose();
        out.loss -= lp(target.ids[t]);
    }
    if (mode == GradMode::prompt) {
        for (auto n : trainable_block_sizes(prompt)) out.prompt_grad.emplace_back(n, 0.0);
    }
    return out;
}

std::string ScriptedLM::generate(const PromptParams& prompt, const TokenSeq& input,
                                 const DecodeConfig& cfg) const {
    check_prompt_shape(prompt, descriptor_);
    if (prompt_span(prompt) + input.size() + 1 > descriptor_.max_context) {
        throw ContextOverflow("prompt + input exceeds context " + std::to_string(descriptor_.max_context));
    }
    std::vector<int> out;
    while (out.size() < cfg.max_len) {
        const int next = argmax_lowest(log_probs(input.ids, out));
        if (next == WordByteTokenizer::kEos) break;
        out.push_back(next);
    }
    return tokenizer_.decode(out);
}

double ScriptedLM::score_perplexity(std::string_view text) const {
    const TokenSeq ids = tokenizer_.encode(text);
    if (ids.empty()) throw EmptyText("cannot score the perplexity of empty text");
    return std::exp(forward_with_prompt(PromptParams::none(), TokenSeq{}, ids, GradMode::none).loss /
                    static_cast<double>(ids.size()));
}

std::vector<float> ScriptedLM::token_embedding(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokenizer_.vocab_size()) {
        throw std::out_of_range("ScriptedLM::token_embedding: id " + std::to_string(id));
    }
    Rng rng(0x5eed0000ULL + static_cast<std::uint64_t>(id));
    std::vector<float> out(descriptor_.d_model);
    for (auto& v : out) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return out;
}

}  // namespace toxprompt
