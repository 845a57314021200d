#include "fixtures.hpp"

#include "tsflow/candidate.hpp"
#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <gtest/gtest.h>

using namespace tsflow;

TEST(Directives, NamesRoundTrip) {
  for (DirectiveKind k : all_directive_kinds()) EXPECT_EQ(parse_directive_kind(to_string(k)), k);
  EXPECT_FALSE(parse_directive_kind("dropout").has_value());
}

TEST(Directives, ParameterRangesAreEnforced) {
  DirectiveInstance d{DirectiveKind::EarlyStopping, {{"patience", 5}}};
  EXPECT_FALSE(check_directive(d).has_value());
  d.params["patience"] = 2.5;
  EXPECT_TRUE(check_directive(d).has_value());
  d.params = {};
  EXPECT_TRUE(check_directive(d).has_value());
}

TEST(Directives, JsonErrorsCarryThePath) {
  try {
    directive_from_json({{"kind", "weight_decay"}, {"params", {{"lambda", -1.0}}}}, "directives[2]");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FieldViolation);
    EXPECT_NE(std::string(e.what()).find("directives[2]"), std::string::npos);
  }
}

TEST(Candidate, JsonRoundTripAndDigest) {
  CandidateConfig c;
  c.model_id = "gd_linear";
  c.hyperparams = {{"lr", 0.01}, {"epochs", std::int64_t{300}}};
  c.directives = {{DirectiveKind::NormalizeZscore, {}}};
  c.seed = 17;
  const CandidateConfig back = candidate_from_json(to_json(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(config_digest(back), config_digest(c));
  EXPECT_EQ(config_digest(c), json_digest(to_json(c)));
  CandidateConfig other = c;
  other.seed = 18;
  EXPECT_NE(config_digest(other), config_digest(c));
}

TEST(Hyperparams, CoercionFollowsTheSchema) {
  const ModelDescriptor* gd = fixtures::starter_banks().find_model("gd_linear");
  ASSERT_NE(gd, nullptr);
  const HyperparamSpec* epochs = gd->find_param("epochs");
  ASSERT_NE(epochs, nullptr);
  EXPECT_TRUE(std::holds_alternative<HyperValue>(epochs->coerce(120)));
  EXPECT_TRUE(std::holds_alternative<std::string>(epochs->coerce(1.5)));
  EXPECT_TRUE(std::holds_alternative<std::string>(epochs->coerce(1e9)));
  EXPECT_TRUE(std::holds_alternative<std::string>(epochs->coerce("many")));
  const HyperparamSpec* lr = gd->find_param("lr");
  EXPECT_TRUE(std::holds_alternative<HyperValue>(lr->coerce(0.1)));
  EXPECT_TRUE(std::holds_alternative<std::string>(lr->coerce(0.0)));
}

TEST(Hash, KnownVectorsAndCanonicalForm) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(canonical_json(nlohmann::json::parse(R"({"b": 1, "a": [1, 2, {"d": null, "c": true}]})")),
            R"({"a":[1,2,{"c":true,"d":null}],"b":1})");
}

TEST(Hash, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) EXPECT_EQ(std::stod(format_double(v)), v);
}
