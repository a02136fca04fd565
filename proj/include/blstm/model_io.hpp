#pragma once

// Versioned text serialization of a trained tagger: header (dimensions, tag
// names, vocabulary hash, scheme, config echo), named parameter blocks with
// 17-significant-digit values, and the transition matrix. load(save(m))
// reproduces every parameter bit-exactly.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "blstm/corpus.hpp"
#include "blstm/decoder.hpp"
#include "blstm/embedding_table.hpp"
#include "blstm/network.hpp"

namespace blstm {

// Everything cmd_tag needs: parameters, tag names, transitions, the tag
// scheme the model was trained under, and the hash of its vocabulary.
struct TaggerModel {
  ModelParams params;
  std::vector<std::string> tag_names;
  TransitionMatrix transitions;
  std::string scheme = "raw";  // "raw" | "iobes"
  std::uint64_t vocab_hash = 0;
  std::string config_echo;  // effective run configuration, free-form
};

namespace detail {

constexpr const char* kModelMagic = "blstm-model";
constexpr int kModelVersion = 1;

struct ModelReader {
  std::ifstream in;
  std::string path;
  std::size_t line_no = 0;

  explicit ModelReader(const std::string& p) : in(p), path(p) {
    if (!in) throw parse_error("cannot open model file '" + p + "'");
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw parse_error(path + ":" + std::to_string(line_no) + ": " + msg);
  }

  std::string next_line() {
    std::string line;
    if (!std::getline(in, line)) fail("unexpected end of file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  // "key rest-of-line"; verifies the key.
  std::string keyed_line(const std::string& key) {
    std::string line = next_line();
    if (line.rfind(key, 0) != 0 || (line.size() > key.size() && line[key.size()] != ' ')) {
      fail("expected '" + key + " ...', got '" + line + "'");
    }
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
  }

  std::size_t keyed_size(const std::string& key) {
    std::string v = keyed_line(key);
    try {
      return std::stoul(v);
    } catch (const std::exception&) {
      fail("bad count in '" + key + " " + v + "'");
    }
  }

  void read_values(double* out, std::size_t count) {
    std::string line = next_line();
    std::istringstream ss(line);
    std::string tok;
    for (std::size_t i = 0; i < count; ++i) {
      if (!(ss >> tok)) fail("expected " + std::to_string(count) + " values");
      char* end = nullptr;
      out[i] = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') fail("bad value '" + tok + "'");
    }
    if (ss >> tok) fail("trailing value '" + tok + "'");
  }
};

inline void write_block(std::ofstream& out, const std::string& name, std::size_t rows,
                        std::size_t cols, const double* data) {
  out << "param " << name << " " << rows << " " << cols << "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << " ";
      out << format_value(data[r * cols + c]);
    }
    out << "\n";
  }
}

inline void read_block(ModelReader& rd, const std::string& name, std::size_t rows,
                       std::size_t cols, double* data) {
  std::string line = rd.next_line();
  std::istringstream ss(line);
  std::string kw, got_name;
  std::size_t got_rows = 0, got_cols = 0;
  if (!(ss >> kw >> got_name >> got_rows >> got_cols) || kw != "param") {
    rd.fail("missing parameter block '" + name + "'");
  }
  if (got_name != name) {
    rd.fail("missing parameter block '" + name + "' (found '" + got_name + "')");
  }
  if (got_rows != rows || got_cols != cols) {
    rd.fail("parameter block '" + name + "' has shape " + std::to_string(got_rows) + "x" +
            std::to_string(got_cols) + ", expected " + std::to_string(rows) + "x" +
            std::to_string(cols));
  }
  for (std::size_t r = 0; r < rows; ++r) rd.read_values(data + r * cols, cols);
}

}  // namespace detail

inline void save_model(const TaggerModel& model, const std::string& path) {
  const ModelParams& p = model.params;
  if (model.tag_names.size() != p.num_tags) {
    throw std::invalid_argument("save_model: " + std::to_string(model.tag_names.size()) +
                                " tag names for " + std::to_string(p.num_tags) + " tags");
  }
  if (model.transitions.num_tags != p.num_tags) {
    throw std::invalid_argument("save_model: transition matrix size mismatch");
  }
  std::ofstream out(path);
  if (!out) throw parse_error("cannot open '" + path + "' for writing");

  out << detail::kModelMagic << " " << detail::kModelVersion << "\n";
  out << "embedding_dim " << p.embedding_dim << "\n";
  out << "hidden_size " << p.hidden_size << "\n";
  out << "layers " << p.num_layers() << "\n";
  out << "vocab_size " << p.vocab_size() << "\n";
  char hash_buf[32];
  std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                static_cast<unsigned long long>(model.vocab_hash));
  out << "vocab_hash " << hash_buf << "\n";
  out << "scheme " << model.scheme << "\n";
  out << "config " << model.config_echo << "\n";
  out << "tags " << p.num_tags;
  for (const std::string& t : model.tag_names) out << " " << t;
  out << "\n";

  visit_params(p, [&](const std::string& name, const auto& param) {
    if constexpr (std::is_same_v<std::decay_t<decltype(param)>, Matrix>) {
      detail::write_block(out, name, param.rows, param.cols, param.data.data());
    } else {
      detail::write_block(out, name, 1, param.size(), param.data());
    }
  });

  out << "transitions " << p.num_tags << "\n";
  for (std::size_t i = 0; i < p.num_tags; ++i) {
    for (std::size_t j = 0; j < p.num_tags; ++j) {
      if (j) out << " ";
      out << int(model.transitions.at(i, j));
    }
    out << "\n";
  }
  out << "start";
  for (std::size_t j = 0; j < p.num_tags; ++j) out << " " << int(model.transitions.start[j]);
  out << "\nend";
  for (std::size_t j = 0; j < p.num_tags; ++j) out << " " << int(model.transitions.end[j]);
  out << "\n";
  if (!out) throw parse_error("write to '" + path + "' failed");
}

inline TaggerModel load_model(const std::string& path) {
  detail::ModelReader rd(path);

  {
    std::string line = rd.next_line();
    std::istringstream ss(line);
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != detail::kModelMagic) {
      rd.fail("not a model file (bad magic)");
    }
    if (version != detail::kModelVersion) {
      rd.fail("unsupported model version " + std::to_string(version));
    }
  }

  TaggerModel model;
  const std::size_t d = rd.keyed_size("embedding_dim");
  const std::size_t hidden = rd.keyed_size("hidden_size");
  const std::size_t layers = rd.keyed_size("layers");
  const std::size_t vocab = rd.keyed_size("vocab_size");
  {
    std::string v = rd.keyed_line("vocab_hash");
    model.vocab_hash = std::strtoull(v.c_str(), nullptr, 16);
  }
  model.scheme = rd.keyed_line("scheme");
  if (model.scheme != "raw" && model.scheme != "iobes") {
    rd.fail("unknown scheme '" + model.scheme + "'");
  }
  model.config_echo = rd.keyed_line("config");
  {
    std::string v = rd.keyed_line("tags");
    std::istringstream ss(v);
    std::size_t m = 0;
    if (!(ss >> m) || m < 1) rd.fail("bad tag count");
    std::string name;
    while (ss >> name) model.tag_names.push_back(name);
    if (model.tag_names.size() != m) {
      rd.fail("tag count " + std::to_string(m) + " but " +
              std::to_string(model.tag_names.size()) + " names");
    }
  }
  const std::size_t m = model.tag_names.size();

  model.params = zero_model(vocab, d, hidden, layers, m);
  visit_params(model.params, [&](const std::string& name, auto& param) {
    if constexpr (std::is_same_v<std::decay_t<decltype(param)>, Matrix>) {
      detail::read_block(rd, name, param.rows, param.cols, param.data.data());
    } else {
      detail::read_block(rd, name, 1, param.size(), param.data());
    }
  });

  if (rd.keyed_size("transitions") != m) rd.fail("transition matrix size mismatch");
  model.transitions = TransitionMatrix(m);
  std::vector<double> row(m);
  for (std::size_t i = 0; i < m; ++i) {
    rd.read_values(row.data(), m);
    for (std::size_t j = 0; j < m; ++j) model.transitions.set(i, j, row[j] != 0.0);
  }
  {
    std::string v = rd.keyed_line("start");
    std::istringstream ss(v);
    for (std::size_t j = 0; j < m; ++j) {
      int b = 0;
      if (!(ss >> b)) rd.fail("start vector too short");
      model.transitions.start[j] = b != 0;
    }
  }
  {
    std::string v = rd.keyed_line("end");
    std::istringstream ss(v);
    for (std::size_t j = 0; j < m; ++j) {
      int b = 0;
      if (!(ss >> b)) rd.fail("end vector too short");
      model.transitions.end[j] = b != 0;
    }
  }
  return model;
}

}  // namespace blstm
