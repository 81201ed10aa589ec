#include "xferlens/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "xferlens/csv.hpp"
#include "xferlens/errors.hpp"

namespace xferlens {

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"syntax", "phonology", "genetic",
                                                        "geography"};

}  // namespace

std::string_view typology_kind_name(TypologyKind k) {
  return kKindNames[static_cast<std::size_t>(k)];
}

std::optional<TypologyKind> parse_typology_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<TypologyKind>(i);
  return std::nullopt;
}

double subword_overlap(const VocabSet& vp, const VocabSet& vt) {
  if (vp.tokens.empty() || vt.tokens.empty())
    throw InputError("subword_overlap: empty vocabulary for '" +
                     (vp.tokens.empty() ? vp.lang : vt.lang).str() + "'");
  std::size_t common = 0;
  for (const auto& tok : vp.tokens)
    if (vt.tokens.contains(tok)) ++common;
  const std::size_t uni = vp.tokens.size() + vt.tokens.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

std::optional<double> typo_similarity(const TypologyVector& a, const TypologyVector& b) {
  if (a.kind != b.kind) throw InputError("typo_similarity: kind mismatch");
  if (a.kind == TypologyKind::kGeography)
    throw InputError("typo_similarity: geography vectors use geo_distance");
  const std::size_t n = std::min(a.dims.size(), b.dims.size());
  double ab = 0.0, aa = 0.0, bb = 0.0;
  std::size_t shared = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!a.dims[i] || !b.dims[i]) continue;
    ++shared;
    ab += *a.dims[i] * *b.dims[i];
    aa += *a.dims[i] * *a.dims[i];
    bb += *b.dims[i] * *b.dims[i];
  }
  if (shared == 0 || aa == 0.0 || bb == 0.0) return std::nullopt;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

namespace {

double euclidean(const TypologyVector& a, const TypologyVector& b) {
  if (a.kind != TypologyKind::kGeography || b.kind != TypologyKind::kGeography)
    throw InputError("geo_distance: both vectors must be geography");
  if (a.dims.size() != b.dims.size())
    throw InputError("geo_distance: dimensionality mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dims.size(); ++i) {
    if (!a.dims[i] || !b.dims[i]) throw InputError("geo_distance: geography must be observed");
    const double d = *a.dims[i] - *b.dims[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

double max_pairwise_geo_distance(const std::vector<TypologyVector>& geography) {
  double best = 0.0;
  for (std::size_t i = 0; i < geography.size(); ++i)
    for (std::size_t j = i + 1; j < geography.size(); ++j)
      best = std::max(best, euclidean(geography[i], geography[j]));
  return best;
}

double geo_distance(const TypologyVector& a, const TypologyVector& b, double max_distance) {
  const double d = euclidean(a, b);
  if (max_distance <= 0.0) return 0.0;
  return d / max_distance;
}

double pretrain_size_feature(const LanguageMeta& meta) {
  if (!(meta.pretrain_words > 0.0))
    throw InputError("pretrain size for '" + meta.lang.str() + "' must be positive");
  return std::log10(meta.pretrain_words);
}

double wmrr(const LangId& t, const WalsTable& wals, const std::map<LangId, LanguageMeta>& meta) {
  auto own = wals.rows.find(t);
  if (own == wals.rows.end() || own->second.empty())
    throw InputError("wmrr: language '" + t.str() + "' has no WALS feature-values");
  if (meta.empty()) throw InputError("wmrr: no language metadata");

  std::map<std::string, double> mass;
  for (const auto& [lang, values] : wals.rows) {
    auto m = meta.find(lang);
    const double words = m == meta.end() ? 0.0 : m->second.pretrain_words;
    for (const auto& fv : values) mass[fv] += words;
  }
  std::vector<double> sorted;
  sorted.reserve(mass.size());
  for (const auto& [fv, w] : mass) sorted.push_back(w);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  double sum = 0.0;
  for (const auto& fv : own->second) {
    const double w = mass.at(fv);
    // competition rank = 1 + number of feature-values with strictly more mass
    const auto ahead = std::lower_bound(sorted.begin(), sorted.end(), w, std::greater<>()) -
                       sorted.begin();
    sum += 1.0 / static_cast<double>(ahead + 1);
  }
  return sum / static_cast<double>(own->second.size());
}

TokenizerMetrics tokenizer_metrics(const TokenizationStats& s) {
  if (s.word_count <= 0)
    throw InputError("tokenizer metrics for '" + s.lang.str() + "': zero words");
  if (s.subword_count < s.word_count)
    throw InputError("tokenizer metrics for '" + s.lang.str() + "': fewer subwords than words");
  if (s.continued_word_count < 0 || s.continued_word_count > s.word_count)
    throw InputError("tokenizer metrics for '" + s.lang.str() +
                     "': continued words outside [0, words]");
  const double words = static_cast<double>(s.word_count);
  return {static_cast<double>(s.subword_count) / words,
          static_cast<double>(s.continued_word_count) / words};
}

GreedyTokenizer::GreedyTokenizer(std::set<std::string> vocab) : vocab_(std::move(vocab)) {
  for (const auto& v : vocab_) {
    std::size_t len = v.rfind("##", 0) == 0 ? v.size() - 2 : v.size();
    max_len_ = std::max(max_len_, len);
  }
}

std::vector<std::string> GreedyTokenizer::tokenize_word(const std::string& word) const {
  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (pos < word.size()) {
    const std::string prefix = pos == 0 ? "" : "##";
    std::size_t len = std::min(max_len_, word.size() - pos);
    std::string piece;
    for (; len > 0; --len) {
      std::string cand = prefix + word.substr(pos, len);
      if (vocab_.contains(cand)) {
        piece = std::move(cand);
        break;
      }
    }
    if (piece.empty()) {
      len = 1;
      piece = prefix + word.substr(pos, 1);
    }
    pieces.push_back(std::move(piece));
    pos += len;
  }
  return pieces;
}

TokenizationStats tokenization_stats(const LangId& lang, const std::string& text,
                                     const GreedyTokenizer& tok) {
  TokenizationStats s{lang, 0, 0, 0};
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    const auto pieces = tok.tokenize_word(word);
    ++s.word_count;
    s.subword_count += static_cast<long long>(pieces.size());
    if (pieces.size() >= 2) ++s.continued_word_count;
  }
  return s;
}

VocabSet vocab_from_corpus(const LangId& lang, const std::string& text,
                           const GreedyTokenizer& tok) {
  VocabSet v{lang, {}};
  std::istringstream in(text);
  std::string word;
  while (in >> word)
    for (auto& p : tok.tokenize_word(word)) v.tokens.insert(std::move(p));
  return v;
}

// ---------------------------------------------------------------------------

std::set<LangId> FeatureResources::languages() const {
  std::set<LangId> out;
  for (const auto& [l, v] : vocabs) out.insert(l);
  for (const auto& t : typology) out.insert(t.lang);
  if (wals)
    for (const auto& [l, v] : wals->rows) out.insert(l);
  for (const auto& [l, m] : meta) out.insert(l);
  for (const auto& [l, s] : tokenization) out.insert(l);
  return out;
}

std::vector<LangPair> directed_pairs(const std::set<LangId>& langs, const std::set<LangId>& pivots) {
  std::vector<LangPair> out;
  for (const auto& p : langs) {
    if (!pivots.empty() && !pivots.contains(p)) continue;
    for (const auto& t : langs)
      if (p != t) out.emplace_back(p, t);
  }
  return out;
}

std::map<LangPair, FeatureVector> build_feature_table(const FeatureResources& res,
                                                      const std::vector<LangPair>& pairs) {
  std::map<std::pair<LangId, TypologyKind>, const TypologyVector*> typ;
  std::vector<TypologyVector> geography;
  for (const auto& t : res.typology) {
    typ[{t.lang, t.kind}] = &t;
    if (t.kind == TypologyKind::kGeography) geography.push_back(t);
  }
  const double max_geo = max_pairwise_geo_distance(geography);
  auto find_typ = [&](const LangId& l, TypologyKind k) -> const TypologyVector* {
    auto it = typ.find({l, k});
    return it == typ.end() ? nullptr : it->second;
  };

  std::map<LangPair, FeatureVector> out;
  for (const auto& [p, t] : pairs) {
    FeatureVector fv;
    fv.pivot = p;
    fv.target = t;
    auto vp = res.vocabs.find(p), vt = res.vocabs.find(t);
    if (vp != res.vocabs.end() && vt != res.vocabs.end() && !vp->second.tokens.empty() &&
        !vt->second.tokens.empty())
      fv.set(Feature::kOsw, subword_overlap(vp->second, vt->second));

    const std::pair<TypologyKind, Feature> sims[] = {{TypologyKind::kSyntax, Feature::kSsyn},
                                                     {TypologyKind::kPhonology, Feature::kSpho},
                                                     {TypologyKind::kGenetic, Feature::kSgen}};
    for (auto [kind, feat] : sims) {
      const auto *a = find_typ(p, kind), *b = find_typ(t, kind);
      if (!a || !b) continue;
      auto s = typo_similarity(*a, *b);
      // negative cosine only arises for non-binary vectors; clamp into the
      // feature's [0,1] range
      if (s) fv.set(feat, std::max(0.0, *s));
    }
    if (const auto *a = find_typ(p, TypologyKind::kGeography),
        *b = find_typ(t, TypologyKind::kGeography);
        a && b)
      fv.set(Feature::kDgeo, geo_distance(*a, *b, max_geo));

    if (auto m = res.meta.find(t); m != res.meta.end())
      fv.set(Feature::kSize, pretrain_size_feature(m->second));
    if (res.wals && !res.meta.empty()) {
      auto w = res.wals->rows.find(t);
      if (w != res.wals->rows.end() && !w->second.empty())
        fv.set(Feature::kWmrr, wmrr(t, *res.wals, res.meta));
    }
    if (auto s = res.tokenization.find(t); s != res.tokenization.end()) {
      auto m = tokenizer_metrics(s->second);
      fv.set(Feature::kFert, m.fertility);
      fv.set(Feature::kPcw, m.continued_fraction);
    }
    if (fv.missing_mask().size() == kNumFeatures)
      throw InputError("no resources for pair (" + p.str() + "," + t.str() + ")");
    out.emplace(LangPair{p, t}, std::move(fv));
  }
  return out;
}

// ---------------------------------------------------------------------------

VocabSet load_vocab(const std::string& path, const LangId& lang) {
  std::ifstream in(path);
  if (!in) throw InputError(path, 0, "cannot open file");
  VocabSet v{lang, {}};
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) v.tokens.insert(line);
  }
  if (v.tokens.empty()) throw InputError(path, 1, "empty vocabulary");
  return v;
}

std::vector<TypologyVector> load_typology(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  if (t.header.size() < 3 || t.header[0] != "lang" || t.header[1] != "kind")
    throw InputError(path, 1, "header must be lang,kind,d0,d1,...");
  std::vector<TypologyVector> out;
  std::map<TypologyKind, std::size_t> widths;
  std::set<std::pair<std::string, TypologyKind>> seen;
  for (const auto& r : t.rows) {
    if (!LangId::is_valid(r.cells[0]))
      throw InputError(path, r.line, "invalid language code '" + r.cells[0] + "'");
    auto kind = parse_typology_kind(r.cells[1]);
    if (!kind) throw InputError(path, r.line, "unknown typology kind '" + r.cells[1] + "'");
    TypologyVector v{LangId(r.cells[0]), *kind, {}};
    // trailing empty cells beyond the kind's width are padding
    std::size_t last = r.cells.size();
    while (last > 2 && r.cells[last - 1].empty()) --last;
    for (std::size_t c = 2; c < r.cells.size(); ++c) {
      if (r.cells[c].empty()) {
        v.dims.emplace_back();
        continue;
      }
      v.dims.emplace_back(csv::parse_double_or_throw(t, r, c));
    }
    if (*kind == TypologyKind::kGeography) {
      v.dims.resize(last - 2);
      for (const auto& d : v.dims)
        if (!d) throw InputError(path, r.line, "geography vectors must be fully observed");
    }
    auto [it, fresh] = widths.emplace(*kind, v.dims.size());
    if (!fresh && it->second != v.dims.size())
      throw InputError(path, r.line, "inconsistent dimensionality for kind '" + r.cells[1] + "'");
    if (!seen.emplace(r.cells[0], *kind).second)
      throw InputError(path, r.line, "duplicate typology row");
    out.push_back(std::move(v));
  }
  return out;
}

WalsTable load_wals(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  csv::require_header(t, {"lang", "feature_value"});
  WalsTable w;
  for (const auto& r : t.rows) {
    if (!LangId::is_valid(r.cells[0]))
      throw InputError(path, r.line, "invalid language code '" + r.cells[0] + "'");
    if (r.cells[1].empty()) throw InputError(path, r.line, "empty feature value");
    w.rows[LangId(r.cells[0])].insert(r.cells[1]);
  }
  return w;
}

std::map<LangId, TokenizationStats> load_tokenization_stats(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  csv::require_header(t, {"lang", "word_count", "subword_count", "continued_word_count"});
  std::map<LangId, TokenizationStats> out;
  for (const auto& r : t.rows) {
    if (!LangId::is_valid(r.cells[0]))
      throw InputError(path, r.line, "invalid language code '" + r.cells[0] + "'");
    TokenizationStats s{LangId(r.cells[0]), csv::parse_int_or_throw(t, r, 1),
                        csv::parse_int_or_throw(t, r, 2), csv::parse_int_or_throw(t, r, 3)};
    try {
      tokenizer_metrics(s);
    } catch (const InputError& e) {
      throw InputError(path, r.line, e.what());
    }
    if (!out.emplace(s.lang, s).second) throw InputError(path, r.line, "duplicate language");
  }
  return out;
}

}  // namespace xferlens
