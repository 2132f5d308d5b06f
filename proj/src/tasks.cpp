// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#include "iolm/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "iolm/common.hpp"

namespace iolm {

const char* task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::summarize: return "summarize";
    case TaskKind::correct: return "correct";
    case TaskKind::fuzzyjoin: return "fuzzyjoin";
  }
  return "?";
}

TaskKind task_from_name(const std::string& name) {
  if (name == "summarize") return TaskKind::summarize;
  if (name == "correct") return TaskKind::correct;
  if (name == "fuzzyjoin") return TaskKind::fuzzyjoin;
  throw ContractViolation("unknown workload: " + name);
}

// All entries are exactly kReviewWordLen characters: reviews then have a
// fixed character layout, which keeps the extract-the-prefix task learnable
// by the toy model at desk scale.
const std::vector<std::string>& review_lexicon() {
  static const std::vector<std::string> words = {
      "bright", "silent", "smooth", "sturdy", "flimsy", "strong", "simple", "useful",
      "broken", "little", "narrow", "golden", "silver", "copper", "wooden", "rubber",
      "modern", "superb", "decent", "proper", "glossy", "sloppy", "steady", "speedy",
      "punchy", "grainy", "chunky", "clunky", "flashy", "trendy", "cheery", "gloomy",
      "smelly", "greasy", "filthy", "pretty", "homely", "lovely", "dainty", "mighty",
      "feeble", "limber", "supple", "rugged", "coarse", "bouncy", "fluffy", "velvet",
      "cotton", "canvas", "marble", "bronze", "pewter", "chrome", "garish", "mellow",
      "yellow", "orange", "purple", "maroon", "indigo", "violet", "cherry", "savory",
      "bitter", "frosty", "wintry", "breezy", "stormy", "cloudy", "sodden", "heated",
      "frozen", "melted", "welded", "carved", "forged", "molded", "folded", "sealed",
      "capped", "corked", "hinged", "ridged", "dented", "warped", "nicked", "frayed",
      "soiled", "washed", "ironed", "zipper", "button", "pocket", "sleeve", "collar",
      "jacket", "mitten", "carpet", "drawer", "mirror", "pillow", "carton", "basket",
      "bucket", "kettle", "heater", "cooler", "copier", "router", "screen", "camera",
      "webcam", "laptop", "tablet", "mobile", "duster", "opener", "peeler", "grater",
      "juicer", "boiler", "burner", "socket", "outlet", "toggle", "widget", "gadget",
  };
  return words;
}

const std::string& confusion_candidates(char c) {
  static const std::vector<std::string> table = [] {
    std::vector<std::string> t(26);
    auto set = [&t](char ch, const char* cand) { t[ch - 'a'] = cand; };
    set('a', "qs"); set('b', "vn"); set('c', "xv"); set('d', "sf"); set('e', "wr");
    set('f', "dg"); set('g', "fh"); set('h', "gj"); set('i', "uo"); set('j', "hk");
    set('k', "jl"); set('l', "km"); set('m', "nl"); set('n', "bm"); set('o', "ip");
    set('p', "ol"); set('q', "wa"); set('r', "et"); set('s', "ad"); set('t', "ry");
    set('u', "yi"); set('v', "cb"); set('w', "qe"); set('x', "zc"); set('y', "tu");
    set('z', "xs");
    return t;
  }();
  if (c < 'a' || c > 'z') throw ContractViolation("confusion_candidates: not a lowercase letter");
  return table[c - 'a'];
}

namespace {

int hamming(const std::string& a, const std::string& b) {
  int d = 0;
  for (size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

}  // namespace

const std::vector<std::string>& typo_lexicon() {
  static const std::vector<std::string> words = [] {
    // Fixed internal seed: the lexicon is a constant of the workload, not a
    // function of the dataset seed. All words share one length so any two
    // words are comparable position-by-position, and the minimum pairwise
    // Hamming distance of 3 makes single-character corruptions uniquely
    // decodable.
    Rng rng(0xC0FFEEull);
    const std::string consonants = "bcdfghjklmnprstvz";
    const std::string vowels = "aeiou";
    std::vector<std::string> out;
    while (out.size() < 512) {
      std::string w;
      bool consonant = rng.next_below(2) == 0;
      while (w.size() < 6) {
        const std::string& pool = consonant ? consonants : vowels;
        w.push_back(pool[rng.next_below(pool.size())]);
        consonant = !consonant;
      }
      bool ok = true;
      for (const auto& other : out)
        if (hamming(w, other) < 3) {
          ok = false;
          break;
        }
      if (!ok) continue;
      out.push_back(w);
    }
    std::sort(out.begin(), out.end());
    return out;
  }();
  return words;
}

const std::vector<std::pair<std::string, std::string>>& abbreviation_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"st", "street"},   {"ave", "avenue"},  {"rd", "road"},     {"dr", "drive"},
      {"blvd", "boulevard"}, {"ln", "lane"},  {"ct", "court"},    {"sq", "square"},
      {"hwy", "highway"}, {"pkwy", "parkway"}, {"mt", "mount"},   {"ft", "fort"},
  };
  return table;
}

std::string render_summarize_prompt(const std::string& review) {
  return "summarize in 5 words: " + review;
}

std::string render_correct_prompt(const std::string& word) { return "fix: " + word; }

std::string render_match_prompt(const std::string& a, const std::string& b) {
  return "same: " + a + " | " + b + " ->";
}

std::string summarize_target(const std::string& review) {
  std::istringstream in(review);
  std::string word, out;
  int count = 0;
  while (count < 5 && in >> word) {
    if (count) out.push_back(' ');
    out += word;
    ++count;
  }
  return out;
}

std::string normalize_entity(const std::string& s) {
  std::string cleaned;
  cleaned.reserve(s.size());
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      cleaned.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else if (c == ' ' || c == '\t' || c == ',' || c == '.' || c == '-' || c == '\'')
      cleaned.push_back(' ');
    // other bytes dropped
  }
  std::istringstream in(cleaned);
  std::string token, out;
  while (in >> token) {
    for (const auto& [abbrev, full] : abbreviation_table())
      if (token == abbrev) {
        token = full;
        break;
      }
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

std::string corrupt_word(const std::string& word, Rng& rng) {
  if (word.empty()) throw ContractViolation("corrupt_word: empty word");
  const auto pos = static_cast<size_t>(rng.next_below(word.size()));
  const std::string& candidates = confusion_candidates(word[pos]);
  std::string out = word;
  out[pos] = candidates[rng.next_below(candidates.size())];
  return out;
}

std::string entity_canonical(const Entity& e) {
  return review_lexicon()[e.word_idx] + " " + abbreviation_table()[e.suffix_idx].second;
}

std::string entity_variant(const Entity& e, Rng& rng) {
  // Rendered as a fixed-width CHAR-style field: padded with trailing
  // spaces to kEntityWidth so every variant aligns position-by-position.
  constexpr size_t kEntityWidth = 18;
  std::string word = review_lexicon()[e.word_idx];
  const auto& [abbrev, full] = abbreviation_table()[e.suffix_idx];
  const bool use_abbrev = rng.next_below(2) == 0;
  std::string suffix = use_abbrev ? abbrev : full;
  if (rng.next_below(2) == 0) word[0] = static_cast<char>(std::toupper(word[0]));
  if (rng.next_below(3) == 0) suffix[0] = static_cast<char>(std::toupper(suffix[0]));
  std::string sep = rng.next_below(5) == 0 ? ", " : " ";
  std::string tail;
  if (use_abbrev && rng.next_below(2) == 0) tail = ".";
  std::string out = word + sep + suffix + tail;
  if (out.size() > kEntityWidth)
    throw ContractViolation("entity_variant: field overflows fixed width");
  out.resize(kEntityWidth, ' ');
  return out;
}

std::string random_review(Rng& rng) {
  const auto& lex = review_lexicon();
  constexpr int kReviewWords = 7;
  std::string out;
  for (int i = 0; i < kReviewWords; ++i) {
    if (i) out.push_back(' ');
    out += lex[rng.next_below(lex.size())];
  }
  return out;
}

namespace {

Entity random_entity(Rng& rng) {
  return {static_cast<int>(rng.next_below(review_lexicon().size())),
          static_cast<int>(rng.next_below(abbreviation_table().size()))};
}

std::pair<std::string, std::string> fuzzy_pair(Rng& rng) {
  const Entity base = random_entity(rng);
  const bool positive = rng.next_below(2) == 0;
  Entity other = base;
  if (!positive) {
    // Near-miss negatives: flip the word, the suffix, or both.
    const uint64_t mode = rng.next_below(10);
    if (mode < 3) {
      other.suffix_idx =
          static_cast<int>((other.suffix_idx + 1 + rng.next_below(abbreviation_table().size() - 1)) %
                           abbreviation_table().size());
    } else if (mode < 8) {
      other.word_idx =
          static_cast<int>((other.word_idx + 1 + rng.next_below(review_lexicon().size() - 1)) %
                           review_lexicon().size());
    } else {
      other = random_entity(rng);
    }
  }
  return {entity_variant(base, rng), entity_variant(other, rng)};
}

}  // namespace

Example make_training_example(TaskKind kind, Rng& rng) {
  switch (kind) {
    case TaskKind::summarize: {
      const std::string review = random_review(rng);
      return {render_summarize_prompt(review), summarize_target(review)};
    }
    case TaskKind::correct: {
      const auto& lex = typo_lexicon();
      const std::string& word = lex[rng.next_below(lex.size())];
      return {render_correct_prompt(corrupt_word(word, rng)), word};
    }
    case TaskKind::fuzzyjoin: {
      // The engine reads only the first generated character; the trailing
      // normalized forms exist to give training a dense target that forces
      // the normalization and comparison features to develop.
      const auto [a, b] = fuzzy_pair(rng);
      const std::string na = normalize_entity(a);
      const std::string nb = normalize_entity(b);
      const bool match = na == nb;
      return {render_match_prompt(a, b),
              std::string(match ? "y" : "n") + " " + na + " | " + nb};
    }
  }
  throw ContractViolation("make_training_example: bad kind");
}

std::vector<SummarizeRow> generate_summarize_rows(int rows, uint64_t seed) {
  Rng rng(seed);
  std::vector<SummarizeRow> out;
  out.reserve(rows);
  for (int i = 0; i < rows; ++i) {
    SummarizeRow row;
    row.product_id = 1000 + static_cast<int>(rng.next_below(500));
    row.user_id = 1 + static_cast<int>(rng.next_below(100000));
    row.review = random_review(rng);
    row.expected = summarize_target(row.review);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<CorrectRow> generate_correct_rows(int rows, uint64_t seed) {
  Rng rng(seed);
  const auto& lex = typo_lexicon();
  std::vector<CorrectRow> out;
  out.reserve(rows);
  for (int i = 0; i < rows; ++i) {
    const std::string& word = lex[rng.next_below(lex.size())];
    out.push_back({i, corrupt_word(word, rng), word});
  }
  return out;
}

FuzzyJoinData generate_fuzzyjoin_data(int rows, uint64_t seed) {
  // Fact table of `rows` entries joined against a small reference catalog
  // (at most 64 distinct entities), the shape that keeps candidate pairs
  // linear in the fact-table size.
  Rng rng(seed);
  FuzzyJoinData data;
  const int catalog_size = std::min(rows, 64);
  std::vector<Entity> catalog;
  for (int j = 0; j < catalog_size; ++j) {
    Entity e = random_entity(rng);
    // Catalog entities are pairwise distinct.
    const auto same = [&e](const Entity& o) {
      return o.word_idx == e.word_idx && o.suffix_idx == e.suffix_idx;
    };
    while (std::any_of(catalog.begin(), catalog.end(), same)) e = random_entity(rng);
    catalog.push_back(e);
    data.right.emplace_back(j, entity_variant(e, rng));
  }
  for (int i = 0; i < rows; ++i) {
    Entity e;
    if (!catalog.empty() && rng.next_below(2) == 0) {
      e = catalog[rng.next_below(catalog.size())];
    } else {
      e = random_entity(rng);
    }
    data.left.emplace_back(i, entity_variant(e, rng));
  }
  for (const auto& [lid, lname] : data.left) {
    const std::string ln = normalize_entity(lname);
    for (const auto& [rid, rname] : data.right)
      if (ln == normalize_entity(rname)) data.matches.emplace_back(lid, rid);
  }
  return data;
}

}  // namespace iolm
