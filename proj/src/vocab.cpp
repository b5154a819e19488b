#include "geomlab/vocab.hpp"

#include <fstream>
#include <sstream>

namespace geomlab {

const std::vector<std::string>& Vocab::base_words() {
  static const std::vector<std::string> words = {
      "a",     "dark",     "mid",   "light", "circle", "square", "triangle",
      "on",    "plain",    "gradient", "noise", "qr",  "watermark", "text"};
  return words;
}

Vocab Vocab::build(int grid_w, int grid_h, const std::vector<std::string>& concepts) {
  if (grid_w <= 0 || grid_h <= 0) throw ConfigError("vocab: grid dims must be positive");
  Vocab v;
  v.grid_w_ = grid_w;
  v.grid_h_ = grid_h;
  v.tokens_.push_back("<pad>");
  v.tokens_.push_back("<empty>");
  for (const auto& w : base_words()) v.tokens_.push_back(w);
  v.base_size_ = static_cast<int>(v.tokens_.size());
  v.concept_start_ = v.base_size_;
  for (const auto& c : concepts) v.tokens_.push_back("<" + c + ">");
  v.loc_start_ = static_cast<int>(v.tokens_.size());
  for (int n = 0; n < grid_h; ++n)
    for (int m = 0; m < grid_w; ++m)
      v.tokens_.push_back("<l{" + std::to_string(m) + "," + std::to_string(n) + "}>");
  v.index_tokens();
  return v;
}

void Vocab::index_tokens() {
  ids_.clear();
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw ConfigError("vocab: duplicate token " + tokens_[i]);
  }
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw ConfigError("vocab: unknown token '" + token + "'");
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ConfigError("vocab: id out of range " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::vector<int> Vocab::encode_text(const std::string& text) const {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) out.push_back(id(tok));
  return out;
}

std::string Vocab::decode_text(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

int Vocab::concept_id(const std::string& name) const {
  auto it = ids_.find("<" + name + ">");
  if (it == ids_.end()) throw ConfigError("vocab: unknown concept name '" + name + "'");
  return it->second;
}

int Vocab::location_id(int m, int n) const {
  if (m < 0 || m >= grid_w_ || n < 0 || n >= grid_h_)
    throw ConfigError(strformat("vocab: cell (%d,%d) outside %dx%d grid", m, n, grid_w_, grid_h_));
  return loc_start_ + n * grid_w_ + m;
}

void Vocab::location_cell(int id, int& m, int& n) const {
  if (!is_location(id)) throw ConfigError("vocab: id is not a location token");
  const int off = id - loc_start_;
  m = off % grid_w_;
  n = off / grid_w_;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IOError("vocab: cannot write " + path);
  os << "#grid\t" << grid_w_ << "x" << grid_h_ << "\n";
  os << "#base\t" << base_size_ << "\n";
  os << "#concepts\t" << (loc_start_ - concept_start_) << "\n";
  for (size_t i = 0; i < tokens_.size(); ++i) os << tokens_[i] << '\t' << i << '\n';
  if (!os) throw IOError("vocab: write failed " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("vocab: cannot open " + path);
  Vocab v;
  std::string line;
  int n_concepts = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line[0] == '#') {
      std::string key, val;
      std::getline(ss, key, '\t');
      std::getline(ss, val);
      if (key == "#grid") {
        auto x = val.find('x');
        v.grid_w_ = std::stoi(val.substr(0, x));
        v.grid_h_ = std::stoi(val.substr(x + 1));
      } else if (key == "#base") {
        v.base_size_ = std::stoi(val);
      } else if (key == "#concepts") {
        n_concepts = std::stoi(val);
      }
      continue;
    }
    std::string tok, ids;
    std::getline(ss, tok, '\t');
    std::getline(ss, ids);
    const int id = std::stoi(ids);
    if (id != static_cast<int>(v.tokens_.size()))
      throw IOError("vocab: non-contiguous ids in " + path);
    v.tokens_.push_back(tok);
  }
  v.concept_start_ = v.base_size_;
  v.loc_start_ = v.base_size_ + n_concepts;
  v.index_tokens();
  return v;
}

}  // namespace geomlab
