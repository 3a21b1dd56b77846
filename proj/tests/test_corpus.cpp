// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "emotag/corpus.hpp"

using namespace emotag;

namespace {

std::vector<Sample> texts(std::initializer_list<const char*> ts) {
  std::vector<Sample> out;
  for (const char* t : ts) out.push_back({t, {0}});
  return out;
}

}  // namespace

TEST_CASE("label vocabulary") {
  auto v = LabelVocabulary::go_emotions();
  CHECK(v.size() == 28);
  for (int i = 0; i < v.size(); ++i) CHECK(v.index_of(v.name(i)) == i);
  CHECK(v.name(18) == "love");
  CHECK_THROWS_AS(LabelVocabulary({"a", "b"}), DataError);
  auto names = v.names();
  names[1] = names[0];
  CHECK_THROWS_AS(LabelVocabulary{names}, DataError);
}

TEST_CASE("load_dataset parses labels and ignores the id column") {
  const auto vocab = LabelVocabulary::go_emotions();
  auto s = parse_dataset("I love it\t18\nmixed news\t17,25\tabc123\n", vocab);
  REQUIRE(s.size() == 2);
  CHECK(s[0].text == "I love it");
  CHECK(s[0].labels == LabelSet{18});
  CHECK(s[1].labels == LabelSet{17, 25});
}

TEST_CASE("load_dataset errors carry the line number") {
  const auto vocab = LabelVocabulary::go_emotions();
  try {
    parse_dataset("oops\t99\n", vocab);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "label index out of range, line 1");
  }
  CHECK_THROWS_WITH_AS(parse_dataset("ok\t1\nno tab here\n", vocab), doctest::Contains("line 2"), DataError);
  CHECK_THROWS_WITH_AS(parse_dataset("x\t1,a\n", vocab), doctest::Contains("line 1"), DataError);
}

TEST_CASE("normalize_text") {
  CHECK(normalize_text("@bob check https://t.co/x GREAT!!!") == "check great");
  CHECK(normalize_text("already clean text") == "already clean text");
  CHECK(normalize_text("good news... bad news :(") == "good news bad news");
  CHECK(normalize_text("www.example.com Visit") == "visit");
  CHECK(normalize_text("") == "");
  CHECK(normalize_text("   ") == "");
  CHECK(normalize_text("Café ÜBER naïve") == "café über naïve");
  CHECK(normalize_text("emoji 😀 ok") == "emoji ok");
  CHECK(normalize_text("email a@b.com") == "email a b com");
}

TEST_CASE("normalize_text is idempotent on random strings") {
  const std::string alphabet = "aZ09 @:/.!#\t\nhttps://www.é😀_-";
  std::mt19937 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    // keep multi-byte sequences valid by sampling whole snippets too
    if (trial % 3 == 0) s += " é😀 @x http://y ";
    const auto once = normalize_text(s);
    CHECK(normalize_text(once) == once);
  }
}

TEST_CASE("fit_tokenizer ranks by frequency then lexicographically") {
  auto tok = fit_tokenizer(texts({"a b", "a"}));
  CHECK(tok.word_index.at("a") == 2);
  CHECK(tok.word_index.at("b") == 3);
  CHECK(tok.vocab_size == 4);
  CHECK(tok.fitted_on == Split::Train);

  auto tie = fit_tokenizer(texts({"x x", "y y"}));
  CHECK(tie.word_index.at("x") == 2);
  CHECK(tie.word_index.at("y") == 3);

  CHECK_THROWS_WITH_AS(fit_tokenizer({}), "empty corpus", DataError);
}

TEST_CASE("tokenizer fits are deterministic") {
  auto corpus = texts({"the cat sat", "on the mat", "the end", "cat cat"});
  auto a = fit_tokenizer(corpus), b = fit_tokenizer(corpus);
  CHECK(a.index_word == b.index_word);
  CHECK(a.word_index == b.word_index);
}

TEST_CASE("encode pads left, truncates to the last 30 tokens, maps OOV to 1") {
  const auto vocab = LabelVocabulary::go_emotions();
  auto tok = fit_tokenizer(texts({"a b"}));
  std::vector<Sample> s{{"a b", {0, 27}}, {"a zzz", {3}}};
  std::string long_text;
  for (int i = 0; i < 35; ++i) long_text += (i < 5 ? "b " : "a ");
  s.push_back({long_text, {1}});
  auto ds = encode(s, tok, vocab, Split::Val);
  REQUIRE(ds.sequences.rows() == 3);
  CHECK(ds.sequences.cols() == 30);
  CHECK(ds.labels.cols() == 28);
  for (int t = 0; t < 28; ++t) CHECK(ds.sequences(0, t) == 0);
  CHECK(ds.sequences(0, 28) == 2);
  CHECK(ds.sequences(0, 29) == 3);
  CHECK(ds.sequences(1, 29) == kOovId);
  for (int t = 0; t < 30; ++t) CHECK(ds.sequences(2, t) == 2);  // leading "b"s dropped
  CHECK(ds.labels(0, 0) == 1);
  CHECK(ds.labels(0, 27) == 1);
  CHECK(ds.labels.row(0).cast<int>().sum() == 2);
  CHECK(ds.split == Split::Val);
}

TEST_CASE("encoding other splits leaves the tokenizer untouched") {
  const auto vocab = LabelVocabulary::go_emotions();
  auto tok = fit_tokenizer(texts({"one two", "two"}));
  const auto before = tok.word_index;
  auto ds = encode({{"three four two", {0}}}, tok, vocab, Split::Test);
  CHECK(tok.word_index == before);
  CHECK((ds.sequences.array() < tok.vocab_size).all());
}

TEST_CASE("label_distribution") {
  EncodedDataset ds;
  ds.labels = LabelMatrix(2, 2);
  ds.labels << 1, 0, 1, 1;
  auto c = label_distribution(ds);
  CHECK(c == std::vector<std::int64_t>{2, 1});

  EncodedDataset empty;
  empty.labels = LabelMatrix::Zero(0, 28);
  CHECK(label_distribution(empty) == std::vector<std::int64_t>(28, 0));

  EncodedDataset full;
  full.labels = LabelMatrix::Ones(5, 28);
  CHECK(label_distribution(full) == std::vector<std::int64_t>(28, 5));
}

TEST_CASE("top_k_words") {
  auto a = top_k_words(texts({"a a b"}), 1);
  REQUIRE(a.size() == 1);
  CHECK(a[0] == std::pair<std::string, std::int64_t>{"a", 2});
  CHECK(top_k_words(texts({"a a b"}), 10).size() == 2);
  auto tie = top_k_words(texts({"b a"}), 2);
  CHECK(tie[0].first == "a");
  CHECK(tie[1].first == "b");
}

TEST_CASE("split_samples is seeded and exhaustive") {
  std::vector<Sample> s;
  for (int i = 0; i < 100; ++i) s.push_back({"t" + std::to_string(i), {i % 28}});
  auto a = split_samples(s, 3), b = split_samples(s, 3);
  CHECK(a.train.size() == 80);
  CHECK(a.val.size() == 10);
  CHECK(a.test.size() == 10);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].text == b.train[i].text);
}
