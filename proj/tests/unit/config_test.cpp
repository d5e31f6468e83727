// Copyright 2026 The mmcoop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <string>

#include "gtest/gtest.h"
#include "mmcoop/config.hpp"

namespace mmcoop {
namespace {

TEST(PresetTest, EveryPresetRoundTrips) {
  for (const auto& name : presets::names()) {
    for (const auto& spec : presets::get(name)) {
      const Json j = to_json(spec);
      const ExperimentSpec back = spec_from_json(Json::parse(j.dump()));
      EXPECT_EQ(to_json(back), j) << name << "/" << spec.name;
      EXPECT_EQ(config_hash(back), config_hash(spec));
    }
  }
}

TEST(PresetTest, ExpectedNamesExist) {
  for (const char* name : {"table1", "table2", "table3", "table3-row3", "table4", "table5", "table6",
                           "table7", "figure2", "figure3", "figure4", "figure8", "theorem2"}) {
    EXPECT_NO_THROW(presets::get(name)) << name;
  }
  EXPECT_THROW(presets::get("table99"), ConfigError);
}

TEST(PresetTest, TrainingPresetsBuildConfigs) {
  for (const char* name : {"table3", "table7", "figure2", "figure4", "figure5", "figure6"}) {
    for (const auto& spec : presets::get(name)) EXPECT_NO_THROW(spec.training_config()) << spec.name;
  }
}

TEST(ConfigTest, UnknownKeysRejected) {
  Json j = to_json(presets::get("table4").front());
  j["game"]["spread"] = {0.1};
  EXPECT_THROW(spec_from_json(j), ConfigError);
  Json k = to_json(presets::get("table4").front());
  k["extra"] = 1;
  EXPECT_THROW(spec_from_json(k), ConfigError);
}

TEST(ConfigTest, InvalidValuesRejected) {
  const Json base = to_json(presets::get("table6").front());
  Json j = base;
  j["game"]["xi"] = -1.0;
  EXPECT_THROW(spec_from_json(j), ConfigError);
  j = base;
  j["temperature"] = 0.0;
  EXPECT_THROW(spec_from_json(j), ConfigError);
  j = base;
  j["discount"] = 1.0;
  EXPECT_THROW(spec_from_json(j), ConfigError);
  j = base;
  j["game"]["spreads"] = {0.3, 0.2, 0.4, 0.5};
  EXPECT_THROW(spec_from_json(j), ConfigError);
  j = base;
  j["game"]["weights"] = {0.0, 0.1};
  EXPECT_THROW(spec_from_json(j), ConfigError);
  j = base;
  j["training"]["initial_q"] = {0.0, 1.0};
  EXPECT_THROW(spec_from_json(j), ConfigError);
  j = base;
  j["game"]["sides"] = "bid";
  EXPECT_THROW(spec_from_json(j), ConfigError);
  j = base;
  j["game"]["n_agents"] = "two";
  EXPECT_THROW(spec_from_json(j), ConfigError);
}

TEST(ConfigTest, PayoffMatrixIsAnalysisOnly) {
  const Json j = Json::parse(R"({"name": "m", "game": {"n_agents": 2, "sides": "ask",
      "payoff_matrix": [[0.05, 0.1], [0.0, 0.4]]}})");
  const auto spec = spec_from_json(j);
  EXPECT_EQ(spec.game.tensor().n_actions(), 2);
  EXPECT_THROW(spec.training_config(), ConfigError);
}

TEST(ConfigTest, ArrayOfExperiments) {
  Json arr = Json::array();
  for (const auto& s : presets::get("table5")) arr.push_back(to_json(s));
  EXPECT_EQ(specs_from_json(arr).size(), 2u);
  EXPECT_THROW(specs_from_json(Json::array()), ConfigError);
}

TEST(ConfigTest, SkewQuotesAreOneBased) {
  const auto spec = presets::get("figure4").front();
  const Json j = to_json(spec);
  EXPECT_EQ(j["training"]["skew"]["long_skew"], Json::array({1, 2}));
  EXPECT_EQ(spec.training.skew.long_skew->bid, 1);
}

}  // namespace
}  // namespace mmcoop
