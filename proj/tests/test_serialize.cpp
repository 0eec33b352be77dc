// Copyright 2026 The fbde Authors.
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

#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fbde/fbde.hpp"
#include "oracle.hpp"

namespace {

fbde::FitResult fitted(std::uint64_t seed, fbde::LeveragingScheme scheme) {
  oracle::Rng rng(seed);
  const auto s = oracle::random_schema(rng);
  const auto q0 = oracle::random_initial(rng, s);
  const auto p = fbde::sample(fbde::BoostedDensity(oracle::random_initial(rng, s)), 300, rng());
  fbde::FitConfig cfg;
  cfg.rounds = 6;
  cfg.scheme = scheme;
  cfg.seed = seed;
  return fbde::fbde_fit(p, q0, cfg);
}

TEST(Serialize, SchemaAndDensityRoundTrip) {
  oracle::Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto s = oracle::random_schema(rng);
    const fbde::TabularDensity d(s, oracle::simplex(rng, s.cell_count()));
    const auto back = fbde::density_from_json(fbde::parse_json_text(fbde::density_to_json(d).dump(), "density"));
    ASSERT_TRUE(back.schema() == s);
    for (std::size_t c = 0; c < s.cell_count(); ++c) {
      ASSERT_EQ(back[c], d[c]);
    }
  }
}

TEST(Serialize, ModelRoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto scheme = seed % 2 ? fbde::LeveragingScheme::relative(0.8) : fbde::LeveragingScheme::exact(0.8);
    const auto res = fitted(seed, scheme);
    const fbde::ModelFile file{res.model, scheme, std::nullopt, {{"rounds", 6}}, "m.manifest.json"};
    const auto text = fbde::model_to_json(file).dump(2);
    const auto back = fbde::model_from_json(fbde::parse_json_text(text, "model"));
    EXPECT_EQ(fbde::model_to_json(back).dump(2), text);
    EXPECT_EQ(back.manifest, "m.manifest.json");
    EXPECT_EQ(back.scheme.kind, scheme.kind);
    EXPECT_EQ(back.scheme.tau, scheme.tau);
    const auto a = res.model.joint();
    const auto b = back.model.joint();
    for (std::size_t c = 0; c < a.mass().size(); ++c) {
      ASSERT_EQ(a[c], b[c]);
    }
  }
}

TEST(Serialize, TreeAndTableClassifiers) {
  const auto res = fitted(9, fbde::LeveragingScheme::exact(0.5));
  const auto& s = res.model.schema();
  for (const auto& round : res.model.rounds()) {
    const auto back = fbde::classifier_from_json(fbde::classifier_to_json(round.classifier), s);
    for (std::size_t cell = 0; cell < s.cell_count(); ++cell) {
      const auto coords = s.coords_of(cell);
      ASSERT_EQ(fbde::evaluate(back, coords), fbde::evaluate(round.classifier, coords));
    }
  }
  oracle::Rng rng(2);
  const fbde::Classifier table = oracle::random_classifier(rng, s, fbde::kLn2, false);
  const auto back = fbde::classifier_from_json(fbde::classifier_to_json(table), s);
  EXPECT_EQ(std::get<fbde::TableClassifier>(back).values(), std::get<fbde::TableClassifier>(table).values());
}

TEST(Serialize, CorruptedNormalizerIsRejected) {
  const auto scheme = fbde::LeveragingScheme::exact(0.8);
  const auto res = fitted(4, scheme);
  auto j = fbde::model_to_json({res.model, scheme, std::nullopt, {}, ""});
  j["rounds"][2]["z"] = j["rounds"][2]["z"].get<double>() * (1 + 1e-6);
  EXPECT_THROW(fbde::model_from_json(j), fbde::Error);
  auto k = fbde::model_to_json({res.model, scheme, std::nullopt, {}, ""});
  k["format"] = "something-else";
  EXPECT_THROW(fbde::model_from_json(k), fbde::Error);
  auto v = fbde::model_to_json({res.model, scheme, std::nullopt, {}, ""});
  v["version"] = 99;
  EXPECT_THROW(fbde::model_from_json(v), fbde::Error);
  EXPECT_THROW(fbde::parse_json_text("{not json", "model"), fbde::Error);
}

TEST(Serialize, EncodingRoundTrip) {
  std::ostringstream text;
  text << "x,sex,label\n";
  for (int i = 0; i < 40; ++i) {
    text << (i * 0.25 - 3.1) << ',' << (i % 2 ? "F" : "M") << ',' << (i % 3 ? "yes" : "no") << '\n';
  }
  fbde::CsvSpec spec;
  spec.sensitive = "sex";
  spec.target = "label";
  spec.bins = 7;
  const auto loaded = fbde::load_csv(fbde::parse_csv(text.str()), spec);
  const auto back = fbde::encoding_from_json(fbde::encoding_to_json(loaded.encoding));
  EXPECT_TRUE(back.schema() == loaded.encoding.schema());
  const auto again = fbde::encode_csv(fbde::parse_csv(text.str()), back);
  for (std::size_t r = 0; r < again.size(); ++r) {
    const auto a = again.row(r);
    const auto b = loaded.dataset.row(r);
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
  EXPECT_EQ(fbde::encoding_to_json(back).dump(), fbde::encoding_to_json(loaded.encoding).dump());
}

TEST(Serialize, ModelWithEncodingMustMatchSchema) {
  const auto scheme = fbde::LeveragingScheme::exact(0.8);
  const auto res = fitted(5, scheme);
  const auto loaded = fbde::load_csv(fbde::parse_csv("c,a\np,0\nq,1\n"), [] {
    fbde::CsvSpec s;
    s.sensitive = "a";
    return s;
  }());
  const auto j = fbde::model_to_json({res.model, scheme, loaded.encoding, {}, ""});
  EXPECT_THROW(fbde::model_from_json(j), fbde::Error);
}

TEST(Serialize, TraceRoundTrip) {
  const auto res = fitted(6, fbde::LeveragingScheme::relative(0.6));
  std::ostringstream out;
  fbde::write_trace(out, res.trace);
  const auto back = fbde::parse_trace(out.str());
  ASSERT_EQ(back.size(), res.trace.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    EXPECT_EQ(back[k].t, res.trace[k].t);
    EXPECT_EQ(back[k].theta, res.trace[k].theta);
    EXPECT_EQ(back[k].gamma_p, res.trace[k].gamma_p);
    EXPECT_EQ(back[k].gamma_q, res.trace[k].gamma_q);
    EXPECT_EQ(back[k].regime, res.trace[k].regime);
    EXPECT_EQ(back[k].rr, res.trace[k].rr);
    EXPECT_EQ(back[k].rr_lower_bound, res.trace[k].rr_lower_bound);
    EXPECT_EQ(back[k].kl_train, res.trace[k].kl_train);
    EXPECT_FALSE(back[k].kl_test.has_value());
    EXPECT_EQ(back[k].z, res.trace[k].z);
  }
  EXPECT_THROW(fbde::parse_trace("a,b\n1,2\n"), fbde::Error);
}

TEST(Serialize, GuaranteeReportJson) {
  const auto scheme = fbde::LeveragingScheme::exact(0.8);
  const auto res = fitted(7, scheme);
  const auto rep = fbde::build_guarantee_report(res.model, scheme, res.model.joint());
  const auto j = fbde::guarantee_report_to_json(rep);
  EXPECT_EQ(j["format"], "fbde-guarantees");
  EXPECT_EQ(j["all_ok"], rep.all_ok());
  EXPECT_EQ(j["per_round"].size(), 6u);
}

}  // namespace
