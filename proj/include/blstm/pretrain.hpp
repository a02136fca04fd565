#pragma once

// Corruption-task embedding pretraining: replace a fraction of the words in
// unlabeled sentences, train the tagging network to classify each token as
// kept (1) or replaced (0), and keep the embedding table it learns.

#include <string>
#include <vector>

#include "blstm/corpus.hpp"
#include "blstm/embedding_table.hpp"
#include "blstm/network.hpp"
#include "blstm/numerics.hpp"

namespace blstm {

struct CorruptedSentence {
  std::vector<std::string> words;
  std::vector<int> labels;  // 1 = kept, 0 = replaced
};

// Each position is independently replaced with probability rate. Replacements
// are drawn uniformly from the vocabulary excluding UNK and redrawn until
// they differ from the original token's normalized form, so a 0 label always
// marks a genuinely different word.
inline CorruptedSentence corrupt(const std::vector<std::string>& sentence, double rate,
                                 const Vocabulary& vocab, Rng& rng) {
  if (sentence.empty()) throw std::invalid_argument("corrupt: empty sentence");
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("corrupt: rate " + std::to_string(rate) + " not in [0, 1]");
  }
  const std::size_t real_words = vocab.size() - 1;  // everything but UNK
  if (real_words < 2) {
    throw std::invalid_argument("corrupt: vocabulary needs at least 2 words besides UNK");
  }

  auto draw_word = [&]() -> const std::string& {
    std::size_t j = rng.uniform_index(real_words);
    if (j >= vocab.unk_index()) ++j;
    return vocab.entry(j);
  };

  CorruptedSentence out;
  out.words.reserve(sentence.size());
  out.labels.reserve(sentence.size());
  for (const std::string& tok : sentence) {
    if (tok.empty()) throw std::invalid_argument("corrupt: empty token");
    if (rng.bernoulli(rate)) {
      const std::string original = normalize_token(tok);
      const std::string* repl = &draw_word();
      while (*repl == original) repl = &draw_word();
      out.words.push_back(*repl);
      out.labels.push_back(0);
    } else {
      out.words.push_back(tok);
      out.labels.push_back(1);
    }
  }
  return out;
}

struct PretrainResult {
  ModelParams model;               // binary classifier; tag 0 = replaced, 1 = kept
  std::vector<double> epoch_loss;
};

// Trains the two-tag network on freshly corrupted sentences, new corruption
// every epoch. replacement_vocab, when given, supplies the words used as
// replacements; the model vocabulary is always used for lookup.
inline PretrainResult pretrain_model(const std::vector<std::vector<std::string>>& corpus,
                                     const Vocabulary& vocab, const TrainConfig& cfg, double rate,
                                     const Vocabulary* replacement_vocab = nullptr) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("pretrain: rate " + std::to_string(rate) + " not in [0, 1]");
  }
  const Vocabulary& repl = replacement_vocab ? *replacement_vocab : vocab;

  PretrainResult res;
  Rng init_rng(derive_seed(cfg.seed, 0));
  res.model = init_model(vocab.size(), cfg.embedding_dim, cfg.hidden_size, cfg.layers, 2,
                         init_rng);

  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng corrupt_rng(derive_seed(cfg.seed, 2));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle(order, shuffle_rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      CorruptedSentence cs = corrupt(corpus[idx], rate, repl, corrupt_rng);
      EncodedSentence enc;
      enc.words.reserve(cs.words.size());
      enc.caps.reserve(cs.words.size());
      enc.gold.reserve(cs.words.size());
      for (std::size_t t = 0; t < cs.words.size(); ++t) {
        enc.words.push_back(vocab.lookup(cs.words[t]));
        enc.caps.push_back(cap_feature(cs.words[t]));
        enc.gold.push_back(static_cast<std::size_t>(cs.labels[t]));
      }
      ForwardCache cache = forward(res.model, enc.words, enc.caps);
      total += loss(cache.probs, enc.gold);
      Gradients g = backward(res.model, cache, enc.gold);
      sgd_step(res.model, g, cfg.learning_rate);
    }
    res.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
  }
  return res;
}

// The embedding table a model has learned: one vector per vocabulary word,
// in vocabulary order.
inline EmbeddingTable embeddings_from_model(const ModelParams& model, const Vocabulary& vocab) {
  if (vocab.size() != model.vocab_size()) {
    throw std::invalid_argument("embeddings_from_model: vocabulary size mismatch");
  }
  EmbeddingTable table;
  table.dim = model.embedding_dim;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const double* row = model.w1.row(i);
    table.add(vocab.entry(i), Vector(row, row + model.embedding_dim));
  }
  return table;
}

// Full pretraining pipeline.
inline EmbeddingTable pretrain_embeddings(const std::vector<std::vector<std::string>>& corpus,
                                          const Vocabulary& vocab, const TrainConfig& cfg,
                                          double rate) {
  PretrainResult res = pretrain_model(corpus, vocab, cfg, rate);
  return embeddings_from_model(res.model, vocab);
}

}  // namespace blstm
