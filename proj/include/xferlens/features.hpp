#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xferlens/core_data.hpp"

namespace xferlens {

struct VocabSet {
  LangId lang;
  std::set<std::string> tokens;  // distinct subword types
};

enum class TypologyKind { kSyntax, kPhonology, kGenetic, kGeography };

std::string_view typology_kind_name(TypologyKind k);
std::optional<TypologyKind> parse_typology_kind(std::string_view s);

struct TypologyVector {
  LangId lang;
  TypologyKind kind = TypologyKind::kSyntax;
  std::vector<std::optional<double>> dims;
};

/// Feature-value identifiers (e.g. "81A=SVO") per language.
struct WalsTable {
  std::map<LangId, std::set<std::string>> rows;
};

struct TokenizationStats {
  LangId lang;
  long long word_count = 0;
  long long subword_count = 0;
  long long continued_word_count = 0;
};

/// Jaccard overlap |Vp ∩ Vt| / |Vp ∪ Vt| of two subword vocabularies.
double subword_overlap(const VocabSet& vp, const VocabSet& vt);

/// Cosine similarity over the dimensions observed in both vectors; empty when
/// no dimension is shared or the shared subvectors have zero norm.
std::optional<double> typo_similarity(const TypologyVector& a, const TypologyVector& b);

/// Largest Euclidean distance between any two geography vectors.
double max_pairwise_geo_distance(const std::vector<TypologyVector>& geography);

/// Euclidean distance divided by `max_distance` (the in-set maximum).
double geo_distance(const TypologyVector& a, const TypologyVector& b, double max_distance);

/// log10 of the pre-training corpus size in words.
double pretrain_size_feature(const LanguageMeta& meta);

/// Mean reciprocal rank of the language's WALS feature-values, where all
/// feature-values are ranked by the total pre-training words of the languages
/// that have them (competition ranking: ties share the smallest rank).
double wmrr(const LangId& t, const WalsTable& wals, const std::map<LangId, LanguageMeta>& meta);

struct TokenizerMetrics {
  double fertility = 1.0;           // subwords per word
  double continued_fraction = 0.0;  // words split into >= 2 subwords
};

TokenizerMetrics tokenizer_metrics(const TokenizationStats& stats);

/// Greedy longest-match-first subword tokenizer over a fixed vocabulary, in
/// the WordPiece style: continuation pieces carry the "##" prefix. Characters
/// not covered by the vocabulary become single-character pieces.
class GreedyTokenizer {
 public:
  explicit GreedyTokenizer(std::set<std::string> vocab);
  std::vector<std::string> tokenize_word(const std::string& word) const;

 private:
  std::set<std::string> vocab_;
  std::size_t max_len_ = 1;
};

/// Tokenizes whitespace-separated text and counts words, subwords and words
/// split across at least two pieces.
TokenizationStats tokenization_stats(const LangId& lang, const std::string& text,
                                     const GreedyTokenizer& tok);
/// Distinct subword types produced on a corpus sample.
VocabSet vocab_from_corpus(const LangId& lang, const std::string& text,
                           const GreedyTokenizer& tok);

/// Everything needed to compute the feature table. Any part may be empty; the
/// corresponding features are then marked missing.
struct FeatureResources {
  std::map<LangId, VocabSet> vocabs;
  std::vector<TypologyVector> typology;
  std::optional<WalsTable> wals;
  std::map<LangId, LanguageMeta> meta;
  std::map<LangId, TokenizationStats> tokenization;

  std::set<LangId> languages() const;
};

/// One FeatureVector per requested pair. Throws InputError for a pair with no
/// feature available at all.
std::map<LangPair, FeatureVector> build_feature_table(const FeatureResources& res,
                                                      const std::vector<LangPair>& pairs);

/// All ordered pairs of distinct languages; restricted to the given pivots
/// when `pivots` is non-empty.
std::vector<LangPair> directed_pairs(const std::set<LangId>& langs,
                                     const std::set<LangId>& pivots = {});

VocabSet load_vocab(const std::string& path, const LangId& lang);
std::vector<TypologyVector> load_typology(const std::string& path);
WalsTable load_wals(const std::string& path);
std::map<LangId, TokenizationStats> load_tokenization_stats(const std::string& path);

}  // namespace xferlens
