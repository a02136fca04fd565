// Command-line front end for the tagging pipeline:
//   build-vocab  count words in tokenized text, write the vocabulary file
//   pretrain     train embeddings on unlabeled text via the corruption task
//   train        train a tagger on a CoNLL file, write the model file
//   tag          tag a CoNLL file with a trained model
//   eval         compare predicted and gold CoNLL files
//
// Exit codes: 0 success, 1 usage/validation, 2 data/parse, 3 internal error.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blstm/corpus.hpp"
#include "blstm/decoder.hpp"
#include "blstm/embedding_table.hpp"
#include "blstm/evaluation.hpp"
#include "blstm/model_io.hpp"
#include "blstm/network.hpp"
#include "blstm/pretrain.hpp"

namespace {

struct Options {
  std::string input, output;
  std::string train_path, vocab_path, model_path, embeddings_path;
  std::string pred_path, gold_path, transitions_out;
  std::size_t vocab_size = 100000;
  std::size_t embedding_dim = 100;
  std::size_t hidden_size = 100;
  std::size_t layers = 1;
  double lr = 0.01;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  double replace_rate = 0.2;
  std::string scheme = "raw";
  std::string decode = "viterbi";
  std::string mode = "accuracy";
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

blstm::TrainConfig train_config(const Options& opt) {
  blstm::TrainConfig cfg;
  cfg.learning_rate = opt.lr;
  cfg.epochs = opt.epochs;
  cfg.hidden_size = opt.hidden_size;
  cfg.embedding_dim = opt.embedding_dim;
  cfg.layers = opt.layers;
  cfg.seed = opt.seed;
  cfg.shuffle = true;
  return cfg;
}

// One canonical line with the fully resolved configuration; echoed to stderr
// and embedded in the model file header.
std::string config_echo(const std::string& cmd, const Options& opt) {
  std::ostringstream s;
  s << "cmd=" << cmd;
  auto put = [&](const char* k, const std::string& v) {
    if (!v.empty()) s << " " << k << "=" << v;
  };
  put("input", opt.input);
  put("output", opt.output);
  put("train", opt.train_path);
  put("vocab", opt.vocab_path);
  put("model", opt.model_path);
  put("embeddings", opt.embeddings_path);
  put("pred", opt.pred_path);
  put("gold", opt.gold_path);
  if (cmd == "build-vocab") s << " vocab-size=" << opt.vocab_size;
  if (cmd == "pretrain" || cmd == "train") {
    s << " embedding-dim=" << opt.embedding_dim << " hidden-size=" << opt.hidden_size
      << " layers=" << opt.layers << " lr=" << fmt_double(opt.lr) << " epochs=" << opt.epochs
      << " seed=" << opt.seed;
  }
  if (cmd == "pretrain") s << " replace-rate=" << fmt_double(opt.replace_rate);
  if (cmd == "train") s << " scheme=" << opt.scheme;
  if (cmd == "tag") s << " decode=" << opt.decode;
  if (cmd == "eval") s << " mode=" << opt.mode;
  return s.str();
}

std::vector<std::string> flatten(const std::vector<std::vector<std::string>>& sentences) {
  std::vector<std::string> tokens;
  for (const auto& s : sentences) tokens.insert(tokens.end(), s.begin(), s.end());
  return tokens;
}

void cmd_build_vocab(const Options& opt) {
  auto sentences = blstm::read_tokenized(opt.input);
  if (sentences.empty()) throw blstm::parse_error(opt.input + ": empty corpus");
  blstm::Vocabulary vocab = blstm::build_vocab(flatten(sentences), opt.vocab_size);
  blstm::write_vocab(vocab, opt.output);
  std::cout << "vocabulary: " << vocab.size() << " entries (incl. UNK) -> " << opt.output
            << "\n";
}

void cmd_pretrain(const Options& opt) {
  auto corpus = blstm::read_tokenized(opt.input);
  if (corpus.empty()) throw blstm::parse_error(opt.input + ": empty corpus");
  blstm::Vocabulary vocab = blstm::read_vocab(opt.vocab_path);

  blstm::PretrainResult res =
      blstm::pretrain_model(corpus, vocab, train_config(opt), opt.replace_rate);
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << fmt_double(res.epoch_loss[e]) << "\n";
  }
  blstm::EmbeddingTable table = blstm::embeddings_from_model(res.model, vocab);
  blstm::write_embeddings(table, opt.output);
  std::cout << "embeddings: " << table.size() << " x " << table.dim << " -> " << opt.output
            << "\n";
}

void cmd_train(const Options& opt, const std::string& echo) {
  auto sentences = blstm::read_conll(opt.train_path);
  if (sentences.empty()) throw blstm::parse_error(opt.train_path + ": no sentences");
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (!sentences[i].has_tags()) {
      throw blstm::parse_error(opt.train_path + ": sentence " + std::to_string(i + 1) +
                               " has no tag column");
    }
  }
  blstm::Vocabulary vocab = blstm::read_vocab(opt.vocab_path);

  if (opt.scheme == "iobes") {
    for (auto& s : sentences) s.tags = blstm::to_iobes(s.tags);
  }
  blstm::TagSet tags = blstm::TagSet::from_corpus(sentences);

  std::vector<std::vector<std::size_t>> tag_seqs;
  tag_seqs.reserve(sentences.size());
  for (const auto& s : sentences) {
    std::vector<std::size_t> seq;
    seq.reserve(s.tags.size());
    for (const std::string& t : s.tags) seq.push_back(tags.index_of(t));
    tag_seqs.push_back(std::move(seq));
  }
  blstm::TransitionMatrix transitions = blstm::build_transitions(tag_seqs, tags.size());

  blstm::Rng init_rng(blstm::derive_seed(opt.seed, 0));
  blstm::ModelParams params = blstm::init_model(vocab.size(), opt.embedding_dim, opt.hidden_size,
                                                opt.layers, tags.size(), init_rng);
  if (!opt.embeddings_path.empty()) {
    blstm::EmbeddingTable table = blstm::read_embeddings(opt.embeddings_path);
    blstm::Rng emb_rng(blstm::derive_seed(opt.seed, 3));
    blstm::load_embeddings(params, table, vocab, emb_rng);
  }

  blstm::TrainLog log = blstm::train(params, sentences, vocab, tags, train_config(opt));
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << fmt_double(log.epoch_loss[e]) << "\n";
  }

  blstm::TaggerModel model;
  model.params = std::move(params);
  model.tag_names = tags.tags();
  model.transitions = transitions;
  model.scheme = opt.scheme;
  model.vocab_hash = blstm::vocab_hash(vocab);
  model.config_echo = echo;
  blstm::save_model(model, opt.model_path);
  std::cout << "model: " << tags.size() << " tags -> " << opt.model_path << "\n";

  if (!opt.transitions_out.empty()) {
    std::ofstream out(opt.transitions_out);
    if (!out) throw blstm::parse_error("cannot open '" + opt.transitions_out + "' for writing");
    out << blstm::format_transitions(transitions, tags.tags());
  }
}

void cmd_tag(const Options& opt) {
  blstm::TaggerModel model = blstm::load_model(opt.model_path);
  blstm::Vocabulary vocab = blstm::read_vocab(opt.vocab_path);
  if (blstm::vocab_hash(vocab) != model.vocab_hash) {
    throw blstm::parse_error(opt.vocab_path +
                             ": vocabulary does not match the one the model was trained with");
  }
  auto input = blstm::read_conll(opt.input);

  std::size_t fallbacks = 0;
  std::vector<blstm::TaggedSentence> output;
  output.reserve(input.size());
  for (const auto& sentence : input) {
    blstm::EncodedSentence enc = blstm::encode_sentence(sentence, vocab, nullptr);
    blstm::ForwardCache cache = blstm::forward(model.params, enc.words, enc.caps);

    std::vector<std::size_t> path;
    if (opt.decode == "greedy") {
      path = blstm::greedy_decode(cache.probs);
    } else {
      blstm::DecodeResult res = blstm::viterbi(cache.probs, model.transitions);
      if (res.used_fallback) ++fallbacks;
      path = std::move(res.path);
    }

    std::vector<std::string> pred;
    pred.reserve(path.size());
    for (std::size_t t : path) pred.push_back(model.tag_names[t]);
    if (model.scheme == "iobes") {
      pred = blstm::spans_to_iob2(blstm::from_iobes(pred), pred.size());
    }
    output.push_back({sentence.tokens, std::move(pred)});
  }
  blstm::write_conll(output, opt.output);
  if (fallbacks > 0) {
    std::cerr << "[blstm] warning: " << fallbacks
              << " sentence(s) had no valid transition path; used greedy fallback\n";
  }
}

void cmd_eval(const Options& opt) {
  auto pred = blstm::read_conll(opt.pred_path);
  auto gold = blstm::read_conll(opt.gold_path);
  if (pred.size() != gold.size()) {
    throw blstm::parse_error("sentence count mismatch: " + opt.pred_path + " has " +
                             std::to_string(pred.size()) + ", " + opt.gold_path + " has " +
                             std::to_string(gold.size()));
  }
  std::vector<std::vector<std::string>> ptags, gtags;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred[i].has_tags() || !gold[i].has_tags()) {
      throw blstm::parse_error("sentence " + std::to_string(i + 1) + " is missing tags");
    }
    if (pred[i].tags.size() != gold[i].tags.size()) {
      throw blstm::parse_error("sentence " + std::to_string(i + 1) + " length mismatch: " +
                               std::to_string(pred[i].tags.size()) + " vs " +
                               std::to_string(gold[i].tags.size()) + " tokens");
    }
    ptags.push_back(pred[i].tags);
    gtags.push_back(gold[i].tags);
  }

  blstm::EvalReport report;
  bool chunk_mode = opt.mode == "chunk";
  if (chunk_mode) {
    report = blstm::chunk_prf(ptags, gtags);
  } else {
    report.token_accuracy = blstm::token_accuracy(ptags, gtags);
    for (const auto& s : gtags) report.total_tokens += s.size();
    report.correct_tokens =
        static_cast<std::size_t>(report.token_accuracy * report.total_tokens + 0.5);
  }
  std::cout << blstm::render_report_text(report, chunk_mode);
  std::cout << blstm::render_report_kv(report, chunk_mode);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BLSTM sequence tagging toolkit"};
  app.require_subcommand(1);
  app.set_config("--config");

  Options opt;

  CLI::App* sc_vocab = app.add_subcommand("build-vocab", "Build a vocabulary file");
  sc_vocab->add_option("--input", opt.input, "Tokenized text, one sentence per line")->required();
  sc_vocab->add_option("--output", opt.output, "Vocabulary file to write")->required();
  sc_vocab->add_option("--vocab-size", opt.vocab_size, "Keep the most frequent N words")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CLI::App* sc_pre = app.add_subcommand("pretrain", "Train word embeddings on unlabeled text");
  sc_pre->add_option("--input", opt.input, "Tokenized text, one sentence per line")->required();
  sc_pre->add_option("--vocab", opt.vocab_path, "Vocabulary file")->required();
  sc_pre->add_option("--output", opt.output, "Embedding file to write")->required();
  sc_pre->add_option("--replace-rate", opt.replace_rate, "Per-token corruption probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  CLI::App* sc_train = app.add_subcommand("train", "Train a tagger on a CoNLL file");
  sc_train->add_option("--train", opt.train_path, "Training data (CoNLL columns)")->required();
  sc_train->add_option("--vocab", opt.vocab_path, "Vocabulary file")->required();
  sc_train->add_option("--model", opt.model_path, "Model file to write")->required();
  sc_train->add_option("--embeddings", opt.embeddings_path,
                       "Optional embedding file to initialize the lookup table");
  sc_train->add_option("--scheme", opt.scheme, "Tag scheme: raw, or iobes to convert IOB2 input")
      ->check(CLI::IsMember({"raw", "iobes"}))
      ->capture_default_str();
  sc_train->add_option("--transitions-out", opt.transitions_out,
                       "Also dump the transition matrix as text");

  CLI::App* sc_tag = app.add_subcommand("tag", "Tag a CoNLL file with a trained model");
  sc_tag->add_option("--model", opt.model_path, "Model file")->required();
  sc_tag->add_option("--vocab", opt.vocab_path, "Vocabulary file")->required();
  sc_tag->add_option("--input", opt.input, "Input CoNLL file (tags ignored if present)")
      ->required();
  sc_tag->add_option("--output", opt.output, "Tagged CoNLL file to write")->required();
  sc_tag->add_option("--decode", opt.decode, "Decoder")
      ->check(CLI::IsMember({"viterbi", "greedy"}))
      ->capture_default_str();

  CLI::App* sc_eval = app.add_subcommand("eval", "Evaluate predictions against gold tags");
  sc_eval->add_option("--pred", opt.pred_path, "Predicted CoNLL file")->required();
  sc_eval->add_option("--gold", opt.gold_path, "Gold CoNLL file")->required();
  sc_eval->add_option("--mode", opt.mode, "accuracy or chunk")
      ->check(CLI::IsMember({"accuracy", "chunk"}))
      ->capture_default_str();

  for (CLI::App* sc : {sc_pre, sc_train}) {
    sc->add_option("--embedding-dim", opt.embedding_dim, "Embedding dimension")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc->add_option("--hidden-size", opt.hidden_size, "LSTM hidden size per direction")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc->add_option("--layers", opt.layers, "Number of stacked bidirectional layers")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc->add_option("--lr", opt.lr, "Learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sc->add_option("--epochs", opt.epochs, "Training epochs")->capture_default_str();
    sc->add_option("--seed", opt.seed, "Master random seed")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  const std::string echo = config_echo(cmd, opt);
  std::cerr << "[blstm] " << echo << "\n";

  try {
    if (cmd == "build-vocab") {
      cmd_build_vocab(opt);
    } else if (cmd == "pretrain") {
      cmd_pretrain(opt);
    } else if (cmd == "train") {
      cmd_train(opt, echo);
    } else if (cmd == "tag") {
      cmd_tag(opt);
    } else if (cmd == "eval") {
      cmd_eval(opt);
    }
  } catch (const blstm::parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
