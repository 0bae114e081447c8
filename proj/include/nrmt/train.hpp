// Training loop: seeded epoch shuffling, per-pair forward/backward with
// gradient accumulation over the batch, Adam updates, and token-diagnostic
// collection. Single-threaded with a fixed reduction order, so a (config,
// seed) pair fully determines the loss trajectory.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrmt/corpus.hpp"
#include "nrmt/model.hpp"
#include "nrmt/objectives.hpp"
#include "nrmt/rng.hpp"

namespace nrmt {

struct EncodedPair {
    std::vector<int> src;
    std::vector<int> tgt;  // reference tokens + <eos>
    Provenance prov = Provenance::clean;
};

struct EncodedCorpus {
    std::vector<EncodedPair> pairs;
};

inline EncodedCorpus encode_corpus(const ParallelCorpus& corpus, const VocabPair& vocabs) {
    corpus.validate();
    EncodedCorpus out;
    out.pairs.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        EncodedPair p;
        p.src = encode(vocabs.src, corpus.pairs[i].src);
        p.tgt = encode(vocabs.tgt, corpus.pairs[i].tgt);
        p.tgt.push_back(Vocab::eos_id);
        p.prov = corpus.has_provenance() ? corpus.provenance[i] : Provenance::clean;
        out.pairs.push_back(std::move(p));
    }
    return out;
}

struct TrainConfig {
    ObjectiveConfig objective;
    long iterations = 1000;
    int batch_pairs = 32;
    double lr = 5e-4;
    long warmup = 0;  // 0: use iterations/10
    std::uint64_t seed = 0;
    std::vector<long> stats_epochs;  // epochs whose full token records are kept
    bool stats_all_epochs = false;

    void validate() const {
        if (iterations < 1) throw std::invalid_argument("train: iterations must be >= 1");
        if (batch_pairs < 1) throw std::invalid_argument("train: batch_pairs must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
        objective.validate();
    }
};

struct EpochStats {
    long epoch = 0;
    double mean_loss = 0.0;
    double clean_el2n_mean = 0.0;
    double noisy_el2n_mean = 0.0;
    double clean_loss_mean = 0.0;
    double noisy_loss_mean = 0.0;
    long clean_tokens = 0;
    long noisy_tokens = 0;
};

struct TrainResult {
    ModelParams params;
    OptimState optim;
    std::vector<double> loss_trajectory;  // one entry per iteration
    std::vector<TokenRecord> token_stats;
    std::vector<EpochStats> epoch_stats;
    long final_epoch = 0;
};

namespace detail {

struct EpochAccum {
    double loss_sum = 0.0;
    long batches = 0;
    double clean_el2n = 0.0, noisy_el2n = 0.0;
    double clean_loss = 0.0, noisy_loss = 0.0;
    long clean_n = 0, noisy_n = 0;

    EpochStats finish(long epoch) const {
        EpochStats s;
        s.epoch = epoch;
        s.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
        s.clean_tokens = clean_n;
        s.noisy_tokens = noisy_n;
        s.clean_el2n_mean = clean_n ? clean_el2n / static_cast<double>(clean_n) : 0.0;
        s.noisy_el2n_mean = noisy_n ? noisy_el2n / static_cast<double>(noisy_n) : 0.0;
        s.clean_loss_mean = clean_n ? clean_loss / static_cast<double>(clean_n) : 0.0;
        s.noisy_loss_mean = noisy_n ? noisy_loss / static_cast<double>(noisy_n) : 0.0;
        return s;
    }
};

}  // namespace detail

inline TrainResult train_model(const EncodedCorpus& data, const ModelConfig& model_cfg,
                               const TrainConfig& cfg) {
    cfg.validate();
    if (data.pairs.empty()) throw std::invalid_argument("train: empty corpus");

    TrainResult result;
    result.params = init_model(model_cfg, cfg.seed);
    long warmup = cfg.warmup > 0 ? cfg.warmup : std::max<long>(1, cfg.iterations / 10);
    result.optim = init_optimizer(result.params, cfg.lr, warmup);

    ObjectiveConfig objective = cfg.objective;
    objective.sched.total_iters = cfg.iterations;

    const std::size_t n = data.pairs.size();
    std::vector<std::size_t> order(n);
    long epoch = 0;
    std::size_t cursor = n;  // forces a shuffle on the first batch

    auto reshuffle = [&] {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        auto eng = make_engine(derive_seed(cfg.seed, "train.epoch", static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), eng);
        cursor = 0;
    };

    auto keeps_stats = [&](long e) {
        if (cfg.stats_all_epochs) return true;
        for (long s : cfg.stats_epochs)
            if (s == e) return true;
        return false;
    };

    std::vector<double> grad(result.params.w.size(), 0.0);
    std::vector<Workspace> workspaces(static_cast<std::size_t>(cfg.batch_pairs));
    detail::EpochAccum accum;

    for (long t = 1; t <= cfg.iterations; ++t) {
        std::vector<std::size_t> batch_idx;
        batch_idx.reserve(static_cast<std::size_t>(cfg.batch_pairs));
        for (int b = 0; b < cfg.batch_pairs; ++b) {
            if (cursor >= n) {
                if (t > 1) {
                    result.epoch_stats.push_back(accum.finish(epoch));
                    accum = {};
                    ++epoch;
                }
                reshuffle();
            }
            batch_idx.push_back(order[cursor++]);
        }

        std::vector<BatchPosition> batch;
        std::vector<std::size_t> pair_pos_count;
        for (std::size_t b = 0; b < batch_idx.size(); ++b) {
            const EncodedPair& pair = data.pairs[batch_idx[b]];
            Workspace& ws = workspaces[b];
            forward(result.params, pair.src, pair.tgt, ws);
            const int tlen = static_cast<int>(pair.tgt.size());
            pair_pos_count.push_back(static_cast<std::size_t>(tlen));
            for (int i = 0; i < tlen; ++i) {
                BatchPosition pos;
                pos.logits.assign(
                    ws.logits.begin() + static_cast<std::ptrdiff_t>(i) * model_cfg.tgt_vocab,
                    ws.logits.begin() + static_cast<std::ptrdiff_t>(i + 1) * model_cfg.tgt_vocab);
                pos.target = pair.tgt[static_cast<std::size_t>(i)];
                pos.pair_index = batch_idx[b];
                pos.position = i;
                pos.prov = pair.prov;
                batch.push_back(std::move(pos));
            }
        }

        ObjectiveOutput out = compute_objective(batch, objective, t, epoch);

        std::fill(grad.begin(), grad.end(), 0.0);
        std::size_t pos_cursor = 0;
        std::vector<double> dlogits_flat;
        for (std::size_t b = 0; b < batch_idx.size(); ++b) {
            const std::size_t tlen = pair_pos_count[b];
            dlogits_flat.assign(tlen * static_cast<std::size_t>(model_cfg.tgt_vocab), 0.0);
            for (std::size_t i = 0; i < tlen; ++i) {
                const auto& g = out.dlogits[pos_cursor + i];
                std::copy(g.begin(), g.end(),
                          dlogits_flat.begin() + static_cast<std::ptrdiff_t>(i * g.size()));
            }
            backward(result.params, workspaces[b], dlogits_flat, grad);
            pos_cursor += tlen;
        }
        optimizer_step(result.params, grad, result.optim);
        result.loss_trajectory.push_back(out.loss);

        accum.loss_sum += out.loss;
        accum.batches += 1;
        for (const auto& rec : out.records) {
            if (rec.prov == Provenance::clean) {
                accum.clean_el2n += rec.el2n;
                accum.clean_loss += rec.loss;
                accum.clean_n += 1;
            } else {
                accum.noisy_el2n += rec.el2n;
                accum.noisy_loss += rec.loss;
                accum.noisy_n += 1;
            }
        }
        if (keeps_stats(epoch))
            result.token_stats.insert(result.token_stats.end(), out.records.begin(),
                                      out.records.end());
    }
    result.epoch_stats.push_back(accum.finish(epoch));
    result.final_epoch = epoch;
    return result;
}

// Greedy translation of raw source sentences into target token sequences.
inline std::vector<std::vector<std::string>> translate_corpus(
    const ModelParams& params, const VocabPair& vocabs,
    const std::vector<Sentence>& sources, int max_decode_len) {
    std::vector<std::vector<std::string>> out;
    out.reserve(sources.size());
    for (const auto& src : sources) {
        std::vector<int> ids = encode(vocabs.src, src);
        std::vector<int> hyp = decode_greedy(params, ids, max_decode_len);
        std::vector<std::string> tokens;
        tokens.reserve(hyp.size());
        for (int id : hyp) tokens.push_back(vocabs.tgt.token(id));
        out.push_back(std::move(tokens));
    }
    return out;
}

}  // namespace nrmt
