#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lahn/error.hpp"
#include "lahn/io.hpp"
#include "lahn/rng.hpp"

namespace lahn {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// Lowercases ASCII, splits on whitespace, and emits every ASCII punctuation
/// character as its own token. Bytes >= 0x80 are treated as word characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

struct Example {
  std::string text;
  int label = 0;  // 0 = non-hate, 1 = hate
  // Set by the synthetic generator: whether an identity term appears.
  std::optional<bool> identity;
  // Filled by Vocabulary::encode; length max_len, trailing PADs only.
  std::vector<int> token_ids;
};

class Vocabulary {
 public:
  Vocabulary() : tokens_{std::string(kPadToken), std::string(kUnkToken)} { reindex(); }

  /// Frequency-ranked vocabulary (ties broken lexicographically) over the
  /// given training examples. Tokens rarer than `min_freq` map to UNK.
  static Vocabulary build(const std::vector<Example>& train, std::size_t max_size = 20000,
                          std::size_t min_freq = 2) {
    if (max_size < 2) throw ParameterError("vocabulary max size must be >= 2");
    std::map<std::string, std::size_t> counts;
    for (const auto& ex : train)
      for (auto& tok : tokenize(ex.text)) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, n] : counts) {
      if (n >= min_freq && tok != kPadToken && tok != kUnkToken) ranked.emplace_back(tok, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [tok, n] : ranked) {
      if (v.tokens_.size() >= max_size) break;
      v.tokens_.push_back(tok);
    }
    v.reindex();
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  /// Token ids truncated or PAD-padded to max_len. Text with no tokens maps to
  /// a single UNK so every example has at least one unmasked position.
  std::vector<int> encode(std::string_view text, std::size_t max_len) const {
    std::vector<int> ids;
    ids.reserve(max_len);
    for (auto& tok : tokenize(text)) {
      if (ids.size() == max_len) break;
      ids.push_back(id(tok));
    }
    if (ids.empty()) ids.push_back(kUnkId);
    ids.resize(max_len, kPadId);
    return ids;
  }

  void encode_all(std::vector<Example>& examples, std::size_t max_len) const {
    for (auto& ex : examples) ex.token_ids = encode(ex.text, max_len);
  }

  /// One token per line; the line number is the id.
  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out += '\n';
    }
    return out;
  }

  void save(const std::string& path) const { write_file_atomic(path, serialize()); }

  static Vocabulary load(const std::string& path) {
    std::istringstream in(read_file(path));
    Vocabulary v;
    v.tokens_.clear();
    std::string line;
    while (std::getline(in, line)) v.tokens_.push_back(line);
    if (v.tokens_.size() < 2 || v.tokens_[0] != kPadToken || v.tokens_[1] != kUnkToken) {
      throw ParseError(path + ": vocabulary must start with " + std::string(kPadToken) + " and " +
                       std::string(kUnkToken));
    }
    v.reindex();
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline Example parse_example(const std::string& line, std::size_t line_no, const std::string& source) {
  const std::string where = source + ":" + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(where + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw ParseError(where + ": record needs a string field \"text\"");
  }
  if (!j.contains("label") || !j["label"].is_number_integer()) {
    throw ParseError(where + ": record needs an integer field \"label\"");
  }
  Example ex;
  ex.text = j["text"].get<std::string>();
  const auto label = j["label"].get<long long>();
  if (label != 0 && label != 1) {
    throw ValidationError(where + ": label must be 0 or 1, got " + std::to_string(label));
  }
  ex.label = static_cast<int>(label);
  if (j.contains("identity")) {
    if (!j["identity"].is_boolean()) throw ParseError(where + ": \"identity\" must be boolean");
    ex.identity = j["identity"].get<bool>();
  }
  return ex;
}

/// Newline-delimited records {"text": string, "label": 0|1}, optional
/// boolean "identity". Blank lines are skipped.
inline std::vector<Example> parse_jsonl(const std::string& content, const std::string& source = "<input>") {
  std::vector<Example> out;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_example(line, line_no, source));
  }
  return out;
}

inline std::vector<Example> load_jsonl(const std::string& path) { return parse_jsonl(read_file(path), path); }

inline std::string to_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::json j;
    j["text"] = ex.text;
    j["label"] = ex.label;
    if (ex.identity) j["identity"] = *ex.identity;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void save_jsonl(const std::string& path, const std::vector<Example>& examples) {
  write_file_atomic(path, to_jsonl(examples));
}

struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::vector<int> token_ids;      // [size × seq_len]
  std::vector<std::uint8_t> mask;  // 1 where token != PAD
  std::vector<int> labels;
  std::vector<std::size_t> example_indices;  // positions in the source corpus
};

inline Batch make_batch(const std::vector<Example>& examples, std::span<const std::size_t> indices) {
  Batch b;
  b.size = indices.size();
  if (b.size == 0) throw ValidationError("batch: no examples");
  b.seq_len = examples[indices[0]].token_ids.size();
  if (b.seq_len == 0) throw ValidationError("batch: examples are not encoded");
  for (std::size_t idx : indices) {
    const auto& ex = examples[idx];
    if (ex.token_ids.size() != b.seq_len) {
      throw DimensionError("batch: example " + std::to_string(idx) + " has " +
                           std::to_string(ex.token_ids.size()) + " ids, expected " +
                           std::to_string(b.seq_len));
    }
    for (int id : ex.token_ids) {
      b.token_ids.push_back(id);
      b.mask.push_back(id != kPadId ? 1 : 0);
    }
    b.labels.push_back(ex.label);
    b.example_indices.push_back(idx);
  }
  return b;
}

/// Training batches. With a seed the corpus order is shuffled
/// deterministically; a final batch of size 1 is dropped.
inline std::vector<Batch> make_batches(const std::vector<Example>& examples, std::size_t batch_size,
                                       std::optional<std::uint64_t> shuffle_seed) {
  if (examples.empty()) throw ValidationError("make_batches: empty corpus");
  if (batch_size < 2) throw ParameterError("make_batches: batch size must be >= 2");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    if (n < 2) break;
    batches.push_back(make_batch(examples, std::span(order).subspan(start, n)));
  }
  return batches;
}

/// In-order batches covering every example, including a size-1 tail.
inline std::vector<Batch> sequential_batches(const std::vector<Example>& examples, std::size_t batch_size) {
  if (examples.empty()) throw ValidationError("sequential_batches: empty corpus");
  if (batch_size == 0) throw ParameterError("sequential_batches: batch size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    batches.push_back(make_batch(examples, std::span(order).subspan(start, n)));
  }
  return batches;
}

}  // namespace lahn
