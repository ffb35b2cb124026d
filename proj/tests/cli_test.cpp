// Copyright 2026 The lgmnet Authors.
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

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(LGMNET_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("lgmnet_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST_F(Cli, UnknownFlagExitsWithUsageError) { EXPECT_EQ(run("train --no-such-flag").code, 2); }

TEST_F(Cli, UnknownDatasetExitsWithUsageError) { EXPECT_EQ(run("train --dataset moons").code, 2); }

TEST_F(Cli, EvalWithoutModelFails) { EXPECT_NE(run("eval --dataset blobs").code, 0); }

TEST_F(Cli, MissingModelFileFails) {
  EXPECT_NE(run("eval --model " + (dir / "absent.lgmn").string()).code, 0);
}

TEST_F(Cli, CorruptModelFileFails) {
  const auto path = dir / "bad.lgmn";
  std::ofstream(path) << "not a checkpoint";
  EXPECT_EQ(run("eval --model " + path.string()).code, 1);
}

TEST_F(Cli, TrainThenEvaluate) {
  const auto model = dir / "m.lgmn";
  const auto trained = run("train --dataset blobs --batches 20 --tasks-per-batch 2 --out " + model.string());
  ASSERT_EQ(trained.code, 0);
  EXPECT_TRUE(fs::exists(model));
  EXPECT_TRUE(fs::exists(model.string() + ".log.csv"));
  const auto eval = run("eval --model " + model.string() + " --tasks 5");
  ASSERT_EQ(eval.code, 0);
  const auto j = nlohmann::json::parse(eval.out);
  EXPECT_EQ(j["tasks"], 5);
  EXPECT_GE(j["mean_accuracy"].get<double>(), 0.0);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = run("gradcheck --seed 4");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

}  // namespace
