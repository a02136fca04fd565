#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "blstm/model_io.hpp"
#include "blstm/network.hpp"
#include "test_support.hpp"

using namespace blstm;
using namespace testsup;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "blstm_network_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<CapFeature> lower_caps(std::size_t n) {
  return std::vector<CapFeature>(n, CapFeature::full_lower);
}

}  // namespace

TEST_CASE("input_vector lookup semantics") {
  ModelParams m = random_model(6, 4, 3, 1, 2, 99);

  SECTION("zero cap weights leave the embedding row") {
    m.w2 = Matrix(4, 3);
    Vector v = input_vector(m, 2, CapFeature::full_upper);
    for (std::size_t j = 0; j < 4; ++j) CHECK(v[j] == m.w1(2, j));
  }

  SECTION("zero embedding row leaves the cap column") {
    for (std::size_t j = 0; j < 4; ++j) m.w1(3, j) = 0.0;
    Vector v = input_vector(m, 3, CapFeature::full_lower);
    for (std::size_t j = 0; j < 4; ++j) CHECK(v[j] == m.w2(j, 0));
  }

  SECTION("matches the dense one-hot matrix products") {
    // W1^T . onehot(word) + W2 . onehot(cap) computed explicitly
    for (std::size_t w = 0; w < 6; ++w) {
      for (CapFeature cap :
           {CapFeature::full_lower, CapFeature::full_upper, CapFeature::leading_cap}) {
        Vector got = input_vector(m, w, cap);
        Vector onehot_w(6, 0.0);
        onehot_w[w] = 1.0;
        auto cv = cap_vector(cap);
        for (std::size_t j = 0; j < 4; ++j) {
          double want = 0.0;
          for (std::size_t i = 0; i < 6; ++i) want += m.w1(i, j) * onehot_w[i];
          for (std::size_t c = 0; c < 3; ++c) want += m.w2(j, c) * cv[c];
          CHECK(std::abs(got[j] - want) < 1e-12);
        }
      }
    }
  }

  CHECK_THROWS_AS(input_vector(m, 6, CapFeature::full_lower), std::invalid_argument);
}

TEST_CASE("lstm cell with all-zero parameters") {
  LstmParams p = detail::zero_lstm(2, 3);
  auto s = lstm_cell_forward({1.0, -2.0}, Vector(3, 0.0), Vector(3, 0.0), p);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(s.i[r] == 0.5);
    CHECK(s.f[r] == 0.5);
    CHECK(s.c[r] == 0.0);
    CHECK(s.h[r] == 0.0);
  }
}

TEST_CASE("lstm cell closed form with only the cell bias set") {
  LstmParams p = detail::zero_lstm(2, 3);
  const double v = 0.8;
  p.b_c = Vector(3, v);
  auto s = lstm_cell_forward({0.5, 0.5}, Vector(3, 0.0), Vector(3, 0.0), p);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(s.c[r] == Catch::Approx(0.5 * std::tanh(v)).epsilon(1e-14));
    CHECK(s.h[r] == Catch::Approx(0.5 * std::tanh(0.5 * std::tanh(v))).epsilon(1e-14));
  }
}

TEST_CASE("lstm cell matches a scalar transcription of the equations") {
  Rng rng(123);
  LstmParams p = detail::zero_lstm(4, 3);
  detail::fill_lstm_uniform(p, 0.5, rng);
  Vector x(4), h_prev(3), c_prev(3);
  for (double& t : x) t = rng.uniform(-1.0, 1.0);
  for (double& t : h_prev) t = rng.uniform(-1.0, 1.0);
  for (double& t : c_prev) t = rng.uniform(-1.0, 1.0);

  auto s = lstm_cell_forward(x, h_prev, c_prev, p);

  for (std::size_t r = 0; r < 3; ++r) {
    double ai = p.b_i[r], af = p.b_f[r], ag = p.b_c[r], ao = p.b_o[r];
    for (std::size_t c = 0; c < 4; ++c) {
      ai += p.w_xi(r, c) * x[c];
      af += p.w_xf(r, c) * x[c];
      ag += p.w_xc(r, c) * x[c];
      ao += p.w_xo(r, c) * x[c];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      ai += p.w_hi(r, c) * h_prev[c];
      af += p.w_hf(r, c) * h_prev[c];
      ag += p.w_hc(r, c) * h_prev[c];
      ao += p.w_ho(r, c) * h_prev[c];
    }
    const double i = 1.0 / (1.0 + std::exp(-(ai + p.w_ci[r] * c_prev[r])));
    const double f = 1.0 / (1.0 + std::exp(-(af + p.w_cf[r] * c_prev[r])));
    const double c = f * c_prev[r] + i * std::tanh(ag);
    const double o = 1.0 / (1.0 + std::exp(-(ao + p.w_co[r] * c)));
    const double h = o * std::tanh(c);
    CHECK(std::abs(s.i[r] - i) < 1e-12);
    CHECK(std::abs(s.f[r] - f) < 1e-12);
    CHECK(std::abs(s.c[r] - c) < 1e-12);
    CHECK(std::abs(s.o[r] - o) < 1e-12);
    CHECK(std::abs(s.h[r] - h) < 1e-12);
  }

  CHECK_THROWS_AS(lstm_cell_forward({1.0}, h_prev, c_prev, p), std::invalid_argument);
}

TEST_CASE("forward with zero output weights is uniform") {
  ModelParams m = random_model(5, 3, 4, 1, 4, 7);
  m.w_fy = Matrix(4, 4);
  m.w_by = Matrix(4, 4);
  m.b_y = Vector(4, 0.0);
  auto cache = forward(m, {0, 2, 4}, lower_caps(3));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(cache.probs(t, j) == Catch::Approx(0.25));
  }
}

TEST_CASE("forward handles single-token sentences and rejects empty ones") {
  ModelParams m = random_model(5, 3, 4, 2, 3, 8);
  auto cache = forward(m, {1}, lower_caps(1));
  double sum = 0.0;
  for (std::size_t j = 0; j < 3; ++j) sum += cache.probs(0, j);
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK_THROWS_AS(forward(m, {}, {}), std::invalid_argument);
}

TEST_CASE("probability rows sum to one") {
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t layers = 1 + rng.uniform_index(2);
    ModelParams m = random_model(8, 4, 5, layers, 3, rng.next_u64());
    const std::size_t n = 1 + rng.uniform_index(6);
    std::vector<std::size_t> words(n);
    for (auto& w : words) w = rng.uniform_index(8);
    auto cache = forward(m, words, lower_caps(n));
    for (std::size_t t = 0; t < n; ++t) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 3; ++j) sum += cache.probs(t, j);
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("bidirectional mirror symmetry") {
  Rng rng(2001);
  for (std::size_t layers : {1ul, 2ul}) {
    ModelParams m = random_model(9, 4, 3, layers, 3, rng.next_u64());
    ModelParams mirrored = mirror_model(m);

    const std::size_t n = 2 + rng.uniform_index(5);
    std::vector<std::size_t> words(n);
    std::vector<CapFeature> caps(n);
    for (std::size_t t = 0; t < n; ++t) {
      words[t] = rng.uniform_index(9);
      caps[t] = static_cast<CapFeature>(rng.uniform_index(3));
    }
    std::vector<std::size_t> rwords(words.rbegin(), words.rend());
    std::vector<CapFeature> rcaps(caps.rbegin(), caps.rend());

    auto straight = forward(m, words, caps);
    auto reversed = forward(mirrored, rwords, rcaps);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(straight.probs(t, j) - reversed.probs(n - 1 - t, j)) < 1e-12);
      }
    }
  }
}

TEST_CASE("loss on forced cases and against a direct sum") {
  Matrix onehot(2, 3);
  onehot(0, 1) = 1.0;
  onehot(1, 2) = 1.0;
  CHECK(loss(onehot, {1, 2}) == 0.0);

  Matrix uniform(3, 4);
  for (double& v : uniform.data) v = 0.25;
  CHECK(loss(uniform, {0, 3, 1}) == Catch::Approx(std::log(4.0)).epsilon(1e-12));

  Rng rng(31);
  Matrix probs(4, 3);
  std::vector<std::size_t> gold(4);
  for (std::size_t t = 0; t < 4; ++t) {
    Vector logits(3);
    for (double& v : logits) v = rng.uniform(-2.0, 2.0);
    Vector p = softmax(logits);
    for (std::size_t j = 0; j < 3; ++j) probs(t, j) = p[j];
    gold[t] = rng.uniform_index(3);
  }
  double want = 0.0;
  for (std::size_t t = 0; t < 4; ++t) want += -std::log(probs(t, gold[t]));
  want /= 4.0;
  CHECK(loss(probs, gold) == Catch::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(loss(probs, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(loss(probs, {0, 1, 2, 3}), std::invalid_argument);  // index 3 >= 3 tags
}

TEST_CASE("BPTT gradients match finite differences") {
  // the keystone check: every parameter, single and stacked layers
  Rng rng(4242);
  for (std::size_t layers : {1ul, 2ul}) {
    const std::size_t n = 3;
    ModelParams m = random_model(8, 5, 4, layers, 3, rng.next_u64());
    std::vector<std::size_t> words(n);
    std::vector<CapFeature> caps(n);
    std::vector<std::size_t> gold(n);
    for (std::size_t t = 0; t < n; ++t) {
      words[t] = rng.uniform_index(8);
      caps[t] = static_cast<CapFeature>(rng.uniform_index(3));
      gold[t] = rng.uniform_index(3);
    }
    CHECK(max_grad_rel_err(m, words, caps, gold, 1e-5) < 1e-4);
  }
}

TEST_CASE("embedding rows of absent words get exactly zero gradient") {
  ModelParams m = random_model(10, 4, 3, 1, 2, 17);
  std::vector<std::size_t> words{1, 3, 1};
  auto cache = forward(m, words, lower_caps(3));
  Gradients g = backward(m, cache, {0, 1, 0});

  CHECK(g.touched_words == std::vector<std::size_t>{1, 3});
  for (std::size_t w = 0; w < 10; ++w) {
    const bool present = w == 1 || w == 3;
    double norm = 0.0;
    for (std::size_t j = 0; j < 4; ++j) norm += std::abs(g.shadow.w1(w, j));
    if (present) {
      CHECK(norm > 0.0);
    } else {
      CHECK(norm == 0.0);
    }
  }
}

TEST_CASE("backward rejects a cache that does not match") {
  ModelParams m = random_model(6, 3, 4, 1, 3, 3);
  ModelParams other = random_model(6, 3, 4, 2, 3, 4);
  auto cache = forward(m, {0, 1}, lower_caps(2));
  CHECK_THROWS_AS(backward(other, cache, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(backward(m, cache, {0}), std::invalid_argument);
}

TEST_CASE("sgd_step edge behavior and descent") {
  ModelParams m = random_model(6, 3, 4, 1, 3, 77);
  std::vector<std::size_t> words{2, 5, 0};
  std::vector<std::size_t> gold{1, 0, 2};
  auto cache = forward(m, words, lower_caps(3));
  Gradients g = backward(m, cache, gold);

  SECTION("zero learning rate leaves the model unchanged") {
    ModelParams before = m;
    sgd_step(m, g, 0.0);
    CHECK(flatten_params(m) == flatten_params(before));
  }

  SECTION("zero gradients leave the model unchanged") {
    Gradients zero;
    zero.shadow = zero_model(6, 3, 4, 1, 3);
    ModelParams before = m;
    sgd_step(m, zero, 0.5);
    CHECK(flatten_params(m) == flatten_params(before));
  }

  SECTION("a small step decreases the loss") {
    Rng rng(301);
    for (int trial = 0; trial < 5; ++trial) {
      ModelParams model = random_model(6, 3, 4, 1, 3, rng.next_u64());
      auto c = forward(model, words, lower_caps(3));
      const double before = loss(c.probs, gold);
      Gradients grads = backward(model, c, gold);
      sgd_step(model, grads, 0.01);
      const double after = loss(forward(model, words, lower_caps(3)).probs, gold);
      CHECK(after < before);
    }
  }

  SECTION("negative learning rate is rejected") {
    CHECK_THROWS_AS(sgd_step(m, g, -0.1), std::invalid_argument);
  }
}

namespace {

// tiny corpus whose tag depends only on the word itself; words are
// digit-free so normalization keeps them distinct
std::string copy_word(std::size_t wid) { return std::string("v") + static_cast<char>('a' + wid); }

std::vector<TaggedSentence> copy_language(std::size_t n_sentences, Rng& rng) {
  std::vector<TaggedSentence> corpus;
  for (std::size_t i = 0; i < n_sentences; ++i) {
    TaggedSentence s;
    const std::size_t len = 4 + rng.uniform_index(5);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t wid = rng.uniform_index(20);
      s.tokens.push_back(copy_word(wid));
      s.tags.push_back("T" + std::to_string(wid % 3));
    }
    corpus.push_back(std::move(s));
  }
  return corpus;
}

Vocabulary copy_vocab() {
  std::vector<std::string> entries;
  for (std::size_t i = 0; i < 20; ++i) entries.push_back(copy_word(i));
  entries.push_back(Vocabulary::kUnk);
  return Vocabulary(entries);
}

}  // namespace

TEST_CASE("training memorizes a word-identity tag rule") {
  Rng data_rng(606);
  auto corpus = copy_language(40, data_rng);
  Vocabulary vocab = copy_vocab();
  TagSet tags = TagSet::from_corpus(corpus);

  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 50;
  cfg.hidden_size = 16;
  cfg.embedding_dim = 8;
  cfg.layers = 1;
  cfg.seed = 5;

  Rng init_rng(derive_seed(cfg.seed, 0));
  ModelParams model =
      init_model(vocab.size(), cfg.embedding_dim, cfg.hidden_size, cfg.layers, tags.size(), init_rng);
  TrainLog log = train(model, corpus, vocab, tags, cfg);

  std::vector<EncodedSentence> data;
  for (const auto& s : corpus) data.push_back(encode_sentence(s, vocab, &tags));
  CHECK(token_accuracy_greedy(model, data) == 1.0);
  REQUIRE(log.epoch_loss.size() == 50);
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
}

TEST_CASE("training is deterministic and epochs=0 is the identity") {
  Rng data_rng(707);
  auto corpus = copy_language(10, data_rng);
  Vocabulary vocab = copy_vocab();
  TagSet tags = TagSet::from_corpus(corpus);

  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 3;
  cfg.hidden_size = 6;
  cfg.embedding_dim = 5;
  cfg.seed = 11;

  auto run = [&]() {
    Rng init_rng(derive_seed(cfg.seed, 0));
    ModelParams model = init_model(vocab.size(), cfg.embedding_dim, cfg.hidden_size, cfg.layers,
                                   tags.size(), init_rng);
    TrainLog log = train(model, corpus, vocab, tags, cfg);
    return std::make_pair(flatten_params(model), log.epoch_loss);
  };
  auto [params1, loss1] = run();
  auto [params2, loss2] = run();
  CHECK(params1 == params2);  // bit-identical
  CHECK(loss1 == loss2);

  TrainConfig zero_cfg = cfg;
  zero_cfg.epochs = 0;
  Rng init_rng(derive_seed(cfg.seed, 0));
  ModelParams model = init_model(vocab.size(), cfg.embedding_dim, cfg.hidden_size, cfg.layers,
                                 tags.size(), init_rng);
  Vector before = flatten_params(model);
  TrainLog log = train(model, corpus, vocab, tags, zero_cfg);
  CHECK(flatten_params(model) == before);
  CHECK(log.epoch_loss.empty());
}

TEST_CASE("train rejects tags outside the tag set before any update") {
  auto corpus = std::vector<TaggedSentence>{{{"vb", "vc"}, {"T0", "BOGUS"}}};
  Vocabulary vocab = copy_vocab();
  TagSet tags({"T0", "T1", "T2"});
  TrainConfig cfg;
  Rng init_rng(1);
  ModelParams model = init_model(vocab.size(), 4, 4, 1, tags.size(), init_rng);
  Vector before = flatten_params(model);
  CHECK_THROWS_WITH(train(model, corpus, vocab, tags, cfg),
                    Catch::Matchers::ContainsSubstring("BOGUS"));
  CHECK(flatten_params(model) == before);
}

TEST_CASE("load_embeddings overwrites matches and re-randomizes the rest") {
  Vocabulary vocab = copy_vocab();
  ModelParams m = random_model(vocab.size(), 3, 4, 1, 2, 13);

  SECTION("full coverage copies the table row for row") {
    EmbeddingTable table;
    Rng rng(21);
    for (const std::string& w : vocab.entries()) {
      table.add(w, {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    }
    Rng re_rng(5);
    load_embeddings(m, table, vocab, re_rng);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      const Vector* v = table.find(vocab.entry(i));
      for (std::size_t j = 0; j < 3; ++j) CHECK(m.w1(i, j) == (*v)[j]);
    }
  }

  SECTION("empty table re-randomizes every row within the init range") {
    EmbeddingTable table;
    table.dim = 3;
    Rng re_rng(5);
    load_embeddings(m, table, vocab, re_rng);
    for (double v : m.w1.data) {
      CHECK(v >= -0.1);
      CHECK(v < 0.1);
    }
  }

  SECTION("single word matches exactly one row") {
    EmbeddingTable table;
    table.add("vd", {9.0, 8.0, 7.0});
    Rng re_rng(5);
    load_embeddings(m, table, vocab, re_rng);
    const std::size_t idx = vocab.lookup("vd");
    CHECK(m.w1(idx, 0) == 9.0);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (i == idx) continue;
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(m.w1(i, j) >= -0.1);
        CHECK(m.w1(i, j) < 0.1);
      }
    }
  }

  SECTION("dimension mismatch names both dimensions") {
    EmbeddingTable table;
    table.add("vb", {1.0, 2.0});
    Rng re_rng(5);
    CHECK_THROWS_WITH(load_embeddings(m, table, vocab, re_rng),
                      Catch::Matchers::ContainsSubstring("2") &&
                          Catch::Matchers::ContainsSubstring("3"));
  }
}

TEST_CASE("model file round trip is bit exact") {
  ModelParams params = random_model(7, 3, 4, 2, 3, 555);
  TaggerModel model;
  model.params = params;
  model.tag_names = {"O", "B-X", "E-X"};
  model.transitions = TransitionMatrix(3);
  model.transitions.set(1, 2, 1);
  model.transitions.start[0] = 1;
  model.transitions.end[2] = 1;
  model.scheme = "iobes";
  model.vocab_hash = 0xdeadbeefcafe1234ull;
  model.config_echo = "cmd=train lr=0.01";

  auto path = temp_file("model.txt");
  save_model(model, path.string());
  TaggerModel back = load_model(path.string());

  CHECK(flatten_params(back.params) == flatten_params(model.params));
  CHECK(back.tag_names == model.tag_names);
  CHECK(back.scheme == "iobes");
  CHECK(back.vocab_hash == model.vocab_hash);
  CHECK(back.config_echo == model.config_echo);
  CHECK(back.transitions.a == model.transitions.a);
  CHECK(back.transitions.start == model.transitions.start);
  CHECK(back.transitions.end == model.transitions.end);
}

TEST_CASE("model file corruption is reported") {
  ModelParams params = random_model(4, 2, 3, 2, 2, 556);
  TaggerModel model;
  model.params = params;
  model.tag_names = {"A", "B"};
  model.transitions = TransitionMatrix(2);
  auto path = temp_file("model_full.txt");
  save_model(model, path.string());

  SECTION("truncated file") {
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto cut = temp_file("model_cut.txt");
    std::ofstream out(cut);
    out << content.substr(0, content.size() / 2);
    out.close();
    CHECK_THROWS_AS(load_model(cut.string()), parse_error);
  }

  SECTION("declared layer count exceeds the stored blocks") {
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // claim three layers while only two are present
    auto pos = content.find("layers 2");
    REQUIRE(pos != std::string::npos);
    content.replace(pos, 8, "layers 3");
    auto bad = temp_file("model_layers.txt");
    std::ofstream out(bad);
    out << content;
    out.close();
    CHECK_THROWS_WITH(load_model(bad.string()),
                      Catch::Matchers::ContainsSubstring("layer2.fwd.w_xi"));
  }

  SECTION("bad magic") {
    auto bad = temp_file("model_magic.txt");
    std::ofstream out(bad);
    out << "something-else 1\n";
    out.close();
    CHECK_THROWS_AS(load_model(bad.string()), parse_error);
  }

  SECTION("unsupported version") {
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto pos = content.find("blstm-model 1");
    REQUIRE(pos != std::string::npos);
    content.replace(pos, 13, "blstm-model 9");
    auto bad = temp_file("model_version.txt");
    std::ofstream out(bad);
    out << content;
    out.close();
    CHECK_THROWS_WITH(load_model(bad.string()), Catch::Matchers::ContainsSubstring("version"));
  }
}

TEST_CASE("train rejects sentences without gold tags") {
  Vocabulary vocab = copy_vocab();
  TagSet tags({"T0"});
  std::vector<TaggedSentence> corpus{{{"va", "vb"}, {}}};
  TrainConfig cfg;
  Rng init_rng(1);
  ModelParams model = init_model(vocab.size(), 4, 4, 1, tags.size(), init_rng);
  CHECK_THROWS_AS(train(model, corpus, vocab, tags, cfg), std::invalid_argument);
}

TEST_CASE("forward rejects mismatched capitalization features") {
  ModelParams m = random_model(5, 3, 4, 1, 3, 12);
  CHECK_THROWS_AS(forward(m, {0, 1}, lower_caps(3)), std::invalid_argument);
}
