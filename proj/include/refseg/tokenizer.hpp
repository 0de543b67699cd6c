// Copyright 2026 The refseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "refseg/error.hpp"

namespace refseg {

namespace special_tokens {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;  // sentence-summary token, always first
inline constexpr int kSep = 3;  // separator, always last
inline constexpr int kMask = 4;
inline constexpr int kCount = 5;
}  // namespace special_tokens

/// Token ids of one phrase: [CLS] w1 ... wn [SEP].
struct TokenSeq {
  std::vector<int> ids;

  std::size_t size() const noexcept { return ids.size(); }
  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

inline void validate_tokens(const TokenSeq& seq, int vocab_size, int max_tokens) {
  if (seq.ids.empty() || seq.ids.front() != special_tokens::kCls) {
    fail(ErrorCode::kTokenOutOfRange, "token sequence must start with the summary token");
  }
  if (static_cast<int>(seq.ids.size()) > max_tokens) {
    fail(ErrorCode::kTokenOutOfRange, "sequence of " + std::to_string(seq.ids.size()) +
                                          " tokens exceeds max_tokens " +
                                          std::to_string(max_tokens));
  }
  for (int id : seq.ids) {
    if (id < 0 || id >= vocab_size) {
      fail(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(id) + " outside vocabulary of " +
                                            std::to_string(vocab_size));
    }
  }
}

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.push_back(w);
  }
  return words;
}

/// Whitespace + lowercase word vocabulary with reserved special ids.
class Vocabulary {
 public:
  Vocabulary() {
    for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) add(s);
  }

  /// Most frequent words first (ties alphabetical), capped at max_size entries
  /// including the special tokens.
  static Vocabulary build(const std::vector<std::string>& corpus, int max_size) {
    std::map<std::string, int> freq;
    for (const auto& text : corpus)
      for (auto& w : split_words(text)) ++freq[w];
    std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [w, n] : ranked) {
      if (v.size() >= max_size) break;
      v.add(w);
    }
    return v;
  }

  static Vocabulary from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    if (words.size() < special_tokens::kCount) {
      fail(ErrorCode::kParseError, "vocabulary is missing its special tokens");
    }
    for (std::size_t i = 0; i < special_tokens::kCount; ++i) {
      if (words[i] != v.words_[i]) fail(ErrorCode::kParseError, "vocabulary special token mismatch");
    }
    for (std::size_t i = special_tokens::kCount; i < words.size(); ++i) v.add(words[i]);
    return v;
  }

  int size() const noexcept { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const noexcept { return words_; }

  int id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? special_tokens::kUnk : it->second;
  }

  /// Truncates words so that [SEP] still fits within max_tokens.
  TokenSeq encode(const std::string& text, int max_tokens) const {
    if (max_tokens < 2) fail(ErrorCode::kInvalidArgument, "max_tokens must leave room for [CLS] and [SEP]");
    TokenSeq seq;
    seq.ids.push_back(special_tokens::kCls);
    for (const auto& w : split_words(text)) {
      if (static_cast<int>(seq.ids.size()) + 1 >= max_tokens) break;
      seq.ids.push_back(id(w));
    }
    seq.ids.push_back(special_tokens::kSep);
    return seq;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  void add(const std::string& w) {
    if (index_.count(w)) return;
    index_[w] = static_cast<int>(words_.size());
    words_.push_back(w);
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace refseg
