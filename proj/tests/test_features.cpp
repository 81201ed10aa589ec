#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "xferlens/errors.hpp"
#include "xferlens/features.hpp"

using namespace xferlens;
namespace xt = xferlens::testing;

namespace {

VocabSet vocab(const std::string& lang, std::set<std::string> tokens) {
  return {LangId(lang), std::move(tokens)};
}

TypologyVector typo(const std::string& lang, TypologyKind kind,
                    std::vector<std::optional<double>> dims) {
  return {LangId(lang), kind, std::move(dims)};
}

std::map<LangId, LanguageMeta> meta_of(const std::map<std::string, double>& words) {
  std::map<LangId, LanguageMeta> out;
  for (const auto& [l, w] : words) out[LangId(l)] = {LangId(l), 3, w};
  return out;
}

WalsTable wals_of(const std::map<std::string, std::set<std::string>>& rows) {
  WalsTable w;
  for (const auto& [l, v] : rows) w.rows[LangId(l)] = v;
  return w;
}

}  // namespace

TEST_CASE("subword overlap examples") {
  CHECK(subword_overlap(vocab("en", {"a", "b"}), vocab("de", {"b", "c"})) == 1.0 / 3.0);
  CHECK(subword_overlap(vocab("en", {"a", "b"}), vocab("de", {"a", "b"})) == 1.0);
  CHECK(subword_overlap(vocab("en", {"a", "b"}), vocab("de", {"c", "d"})) == 0.0);
  CHECK_THROWS_AS(subword_overlap(vocab("en", {}), vocab("de", {"a"})), InputError);
}

TEST_CASE("subword overlap matches the oracle and is symmetric") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> a, b;
    for (int i = 0; i < 1 + static_cast<int>(rng.below(20)); ++i)
      a.push_back("t" + std::to_string(rng.below(30)));
    for (int i = 0; i < 1 + static_cast<int>(rng.below(20)); ++i)
      b.push_back("t" + std::to_string(rng.below(30)));
    const VocabSet va = vocab("en", {a.begin(), a.end()}), vb = vocab("de", {b.begin(), b.end()});
    const double v = subword_overlap(va, vb);
    CHECK(v == xt::jaccard_oracle(a, b));
    CHECK(v == subword_overlap(vb, va));
    CHECK((v == 1.0) == (va.tokens == vb.tokens));
  }
}

TEST_CASE("typology similarity examples") {
  using K = TypologyKind;
  CHECK(*typo_similarity(typo("en", K::kSyntax, {1, 0, 1}), typo("de", K::kSyntax, {1, 0, 1})) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*typo_similarity(typo("en", K::kSyntax, {1, 0}), typo("de", K::kSyntax, {0, 1})) == 0.0);
  CHECK_FALSE(typo_similarity(typo("en", K::kSyntax, {1, std::nullopt}),
                              typo("de", K::kSyntax, {std::nullopt, 1}))
                  .has_value());
  CHECK_THROWS(typo_similarity(typo("en", K::kSyntax, {1}), typo("de", K::kPhonology, {1})));
}

TEST_CASE("typology similarity over shared observed dimensions") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::optional<double>> a(12), b(12);
    for (std::size_t i = 0; i < 12; ++i) {
      if (rng.uniform() < 0.7) a[i] = rng.uniform(-1, 1);
      if (rng.uniform() < 0.7) b[i] = rng.uniform(-1, 1);
    }
    const auto ta = typo("en", TypologyKind::kPhonology, a);
    const auto tb = typo("de", TypologyKind::kPhonology, b);
    const auto got = typo_similarity(ta, tb);
    const auto expect = xt::shared_cosine_oracle(a, b);
    REQUIRE(got.has_value() == expect.has_value());
    if (!got) continue;
    CHECK(*got == doctest::Approx(*expect).epsilon(1e-12));
    CHECK(std::abs(*got) <= 1.0);
    CHECK(*got == doctest::Approx(*typo_similarity(tb, ta)).epsilon(1e-15));
    auto scaled = a;
    for (auto& v : scaled)
      if (v) *v *= 3.5;
    CHECK(*typo_similarity(typo("en", TypologyKind::kPhonology, scaled), tb) ==
          doctest::Approx(*got).epsilon(1e-12));
  }
}

TEST_CASE("geographic distance examples") {
  using K = TypologyKind;
  const std::vector<TypologyVector> geo = {typo("en", K::kGeography, {0, 0}),
                                           typo("de", K::kGeography, {3, 0}),
                                           typo("hi", K::kGeography, {3, 4})};
  const double mx = max_pairwise_geo_distance(geo);
  CHECK(mx == 5.0);
  CHECK(geo_distance(geo[0], geo[0], mx) == 0.0);
  CHECK(geo_distance(geo[0], geo[2], mx) == 1.0);
  CHECK(geo_distance(geo[0], geo[1], mx) == 3.0 / 5.0);
  CHECK(geo_distance(geo[1], geo[2], mx) == 4.0 / 5.0);
  CHECK_THROWS(geo_distance(geo[0], typo("sw", K::kSyntax, {1, 1}), mx));
}

TEST_CASE("geographic distance obeys the triangle inequality") {
  Rng rng(8);
  std::vector<TypologyVector> geo;
  for (std::size_t i = 0; i < 8; ++i)
    geo.push_back(typo(xt::lang_code(i).str(), TypologyKind::kGeography,
                       {rng.uniform(-90, 90), rng.uniform(-180, 180)}));
  for (const auto& a : geo)
    for (const auto& b : geo)
      for (const auto& c : geo)
        CHECK(geo_distance(a, c, 1.0) <= geo_distance(a, b, 1.0) + geo_distance(b, c, 1.0) + 1e-9);
}

TEST_CASE("pretraining size feature") {
  CHECK(pretrain_size_feature({LangId("en"), 5, 1e6}) == 6.0);
  CHECK(pretrain_size_feature({LangId("en"), 5, 1.0}) == 0.0);
  CHECK(pretrain_size_feature({LangId("en"), 5, 3162278}) == doctest::Approx(6.5).epsilon(1e-6));
  CHECK_THROWS_AS(pretrain_size_feature({LangId("en"), 5, 0.0}), InputError);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double w = std::exp(rng.uniform(0, 25));
    CHECK(std::abs(pretrain_size_feature({LangId("en"), 5, w}) - std::log(w) / std::log(10.0)) <
          1e-12);
  }
}

TEST_CASE("wmrr examples") {
  CHECK(wmrr(LangId("en"), wals_of({{"en", {"1A=x"}}}), meta_of({{"en", 10}})) == 1.0);
  const auto w = wals_of({{"en", {"1A=x"}}, {"de", {"1A=y"}}});
  CHECK(wmrr(LangId("de"), w, meta_of({{"en", 10}, {"de", 5}})) == 0.5);
  CHECK_THROWS_AS(wmrr(LangId("fr"), w, meta_of({{"en", 10}})), InputError);
  CHECK_THROWS_AS(wmrr(LangId("en"), w, {}), InputError);
}

TEST_CASE("wmrr competition ranking on ties") {
  // masses: a=10, b=10, c=5 -> ranks 1, 1, 3
  const auto w = wals_of({{"en", {"a", "b"}}, {"de", {"c"}}});
  const auto m = meta_of({{"en", 10}, {"de", 5}});
  CHECK(wmrr(LangId("en"), w, m) == 1.0);
  CHECK(wmrr(LangId("de"), w, m) == 1.0 / 3.0);
}

TEST_CASE("wmrr matches an exhaustive ranking oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    std::map<std::string, std::set<std::string>> rows;
    std::map<std::string, double> words;
    for (std::size_t l = 0; l < 4; ++l) {
      const std::string code = xt::lang_code(l).str();
      words[code] = std::floor(rng.uniform(1, 6)) * 1000;  // coarse values force ties
      for (int f = 0; f < 5; ++f)
        if (rng.uniform() < 0.5) rows[code].insert("f" + std::to_string(f));
      if (rows[code].empty()) rows[code].insert("f0");
    }
    std::map<std::string, double> scaled = words;
    for (auto& [l, w] : scaled) w *= 7.0;
    for (const auto& [l, v] : rows) {
      const double got = wmrr(LangId(l), wals_of(rows), meta_of(words));
      CHECK(got == xt::wmrr_oracle(l, rows, words));
      CHECK(got > 0.0);
      CHECK(got <= 1.0);
      CHECK(wmrr(LangId(l), wals_of(rows), meta_of(scaled)) == got);
    }
  }
}

TEST_CASE("tokenizer metrics") {
  auto m = tokenizer_metrics({LangId("en"), 100, 100, 0});
  CHECK(m.fertility == 1.0);
  CHECK(m.continued_fraction == 0.0);
  m = tokenizer_metrics({LangId("en"), 4, 7, 3});
  CHECK(m.fertility == 1.75);
  CHECK(m.continued_fraction == 0.75);
  CHECK_THROWS_AS(tokenizer_metrics({LangId("en"), 0, 0, 0}), InputError);
  CHECK_THROWS_AS(tokenizer_metrics({LangId("en"), 5, 4, 0}), InputError);
}

TEST_CASE("greedy tokenizer on a hand-counted corpus") {
  const GreedyTokenizer tok(
      {"un", "##believ", "##able", "the", "cat", "##s", "play", "##ing"});
  CHECK(tok.tokenize_word("unbelievable") ==
        std::vector<std::string>{"un", "##believ", "##able"});
  CHECK(tok.tokenize_word("dog") == std::vector<std::string>{"d", "##o", "##g"});
  // the | cat ##s | un ##believ ##able | play | play ##ing | the | d ##o ##g
  const auto s = tokenization_stats(LangId("en"), "the cats unbelievable play\nplaying the dog", tok);
  CHECK(s.word_count == 7);
  CHECK(s.subword_count == 13);
  CHECK(s.continued_word_count == 4);
  const auto m = tokenizer_metrics(s);
  CHECK(m.fertility == 13.0 / 7.0);
  CHECK(m.continued_fraction == 4.0 / 7.0);

  const auto whole = tokenization_stats(LangId("en"), "the cat play the", tok);
  const auto wm = tokenizer_metrics(whole);
  CHECK(wm.fertility == 1.0);
  CHECK(wm.continued_fraction == 0.0);
}

TEST_CASE("feature table for two languages with full resources") {
  using K = TypologyKind;
  FeatureResources res;
  res.vocabs[LangId("en")] = vocab("en", {"a", "b", "c"});
  res.vocabs[LangId("de")] = vocab("de", {"b", "c", "d"});
  for (auto k : {K::kSyntax, K::kPhonology, K::kGenetic}) {
    res.typology.push_back(typo("en", k, {1, 0, 1}));
    res.typology.push_back(typo("de", k, {1, 1, 1}));
  }
  res.typology.push_back(typo("en", K::kGeography, {0, 0}));
  res.typology.push_back(typo("de", K::kGeography, {1, 1}));
  res.wals = wals_of({{"en", {"1A=a"}}, {"de", {"1A=b"}}});
  res.meta = meta_of({{"en", 1e9}, {"de", 1e8}});
  res.tokenization[LangId("en")] = {LangId("en"), 10, 12, 2};
  res.tokenization[LangId("de")] = {LangId("de"), 10, 15, 4};
  const auto table = build_feature_table(res, directed_pairs(res.languages()));
  REQUIRE(table.size() == 2);
  for (const auto& [pair, fv] : table) CHECK(fv.missing_mask().empty());
  const auto& ed = table.at({LangId("en"), LangId("de")});
  CHECK(*ed.get(Feature::kOsw) == 0.5);
  CHECK(*ed.get(Feature::kSsyn) == doctest::Approx(2.0 / std::sqrt(6.0)));
  CHECK(*ed.get(Feature::kDgeo) == 1.0);
  CHECK(*ed.get(Feature::kSize) == 8.0);
  CHECK(*ed.get(Feature::kWmrr) == 0.5);
  CHECK(*ed.get(Feature::kFert) == 1.5);
  CHECK(*ed.get(Feature::kPcw) == 0.4);

  // round trip through CSV
  std::stringstream ss;
  write_features(ss, table);
  CHECK(read_features(ss, "features.csv") == table);

  // a language absent from WALS loses only wmrr
  res.wals = wals_of({{"en", {"1A=a"}}});
  const auto partial = build_feature_table(res, directed_pairs(res.languages()));
  CHECK(partial.at({LangId("en"), LangId("de")}).missing_mask() == std::set<Feature>{Feature::kWmrr});
  CHECK(partial.at({LangId("de"), LangId("en")}).missing_mask().empty());
}

TEST_CASE("feature table rejects a pair with no resources") {
  FeatureResources res;
  res.meta = meta_of({{"en", 1e9}});
  CHECK_THROWS_AS(build_feature_table(res, {{LangId("de"), LangId("fr")}}), InputError);
}

TEST_CASE("directed pairs with pivots") {
  const std::set<LangId> langs{LangId("de"), LangId("en"), LangId("hi")};
  CHECK(directed_pairs(langs).size() == 6);
  CHECK(directed_pairs(langs, {LangId("en")}).size() == 2);
}

TEST_CASE("resource loaders") {
  const auto dir = xt::temp_dir("features_loaders");
  xt::write_text(dir / "typ.csv",
                 "lang,kind,d0,d1,d2\nen,syntax,1,0,\nde,syntax,1,,1\nen,geography,10,20,\n");
  const auto t = load_typology((dir / "typ.csv").string());
  REQUIRE(t.size() == 3);
  CHECK_FALSE(t[0].dims[2].has_value());
  CHECK(t[2].dims.size() == 2);
  xt::write_text(dir / "bad.csv", "lang,kind,d0\nen,morphology,1\n");
  try {
    load_typology((dir / "bad.csv").string());
    FAIL("expected error");
  } catch (const InputError& e) {
    CHECK(e.line() == 2);
  }
  xt::write_text(dir / "wals.csv", "lang,feature_value\nen,81A=SVO\nen,82A=x\nde,81A=SOV\n");
  CHECK(load_wals((dir / "wals.csv").string()).rows.at(LangId("en")).size() == 2);
  xt::write_text(dir / "tok.csv",
                 "lang,word_count,subword_count,continued_word_count\nen,10,12,2\n");
  CHECK(load_tokenization_stats((dir / "tok.csv").string()).at(LangId("en")).subword_count == 12);
  xt::write_text(dir / "en.txt", "a\nb\n\nc\n");
  CHECK(load_vocab((dir / "en.txt").string(), LangId("en")).tokens.size() == 3);
}
