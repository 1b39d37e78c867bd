#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>

#include "gbu/common/error.hpp"
#include "gbu/common/json.hpp"
#include "gbu/data/record.hpp"
#include "gbu/eval/evaluate.hpp"
#include "gbu/model/checkpoint.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using gbu::Json;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("gbu_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  CliRun gbu(const std::string& args, const std::string& env = "") const {
    const auto log = dir / "stdout.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + GBU_CLI_PATH + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }

  /// Six 480-s nights and a tiny gated config with a 50/50 subject split.
  void small_dataset() const {
    write("profile.json", R"({"subjects": 6, "night_seconds": 480})");
    ASSERT_EQ(gbu("synth --out " + (dir / "data").string() + " --profile " + (dir / "profile.json").string()).code, 0);
    write("run.json", R"({"model": {"preset": "tiny"}, "train": {"epochs": 3, "seed": 2},
                          "gate": {"n_heads": 2}, "data": {"split_ratio": 0.5, "split_seed": 1}})");
  }
};

}  // namespace

TEST(RunConfig, DefaultsAreCanonicalAndStable) {
  const auto a = gbu::cli::run_config_from_json(Json::object());
  const auto b = gbu::cli::run_config_from_json(gbu::cli::to_json(a));
  EXPECT_EQ(gbu::cli::to_json(a), gbu::cli::to_json(b));
  EXPECT_EQ(gbu::cli::run_config_hash(a), gbu::cli::run_config_hash(b));
  EXPECT_EQ(a.lr, 2e-4);
  EXPECT_EQ(a.epochs, 500u);
  EXPECT_EQ(a.batch, 1u);
}

TEST(RunConfig, UnknownKeysAndConflictsRejected) {
  auto code = [](const std::string& text) {
    try {
      (void)gbu::cli::run_config_from_json(Json::parse(text));
    } catch (const gbu::Error& e) {
      return e.code();
    }
    return gbu::ErrorCode::kContract;
  };
  EXPECT_EQ(code(R"({"training": {}})"), gbu::ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"train": {"learning_rate": 1}})"), gbu::ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"model": {"widths": [1]}})"), gbu::ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"model": {"lambda": 0.1}, "train": {"lambda": 0.3}})"), gbu::ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"gate": {"mode": "identity", "n_heads": 2}})"), gbu::ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"train": {"batch": 4}})"), gbu::ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"eval": {"aggregation": "subject"}})"), gbu::ErrorCode::kConfig);
}

TEST(RunConfig, SharedKeysFeedTheModel) {
  const auto c = gbu::cli::run_config_from_json(
      Json::parse(R"({"model": {"preset": "full"}, "train": {"lambda": 0.5}, "gate": {"n_heads": 3}})"));
  EXPECT_EQ(c.model.lambda, 0.5);
  EXPECT_EQ(c.model.n_gate_heads, 3u);
  EXPECT_EQ(c.model.bert_hidden, 256u);
  EXPECT_EQ(gbu::cli::to_json(c)["train"]["lambda"], 0.5);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(gbu("").code, 2);
  EXPECT_EQ(gbu("frobnicate").code, 2);
  EXPECT_EQ(gbu("train").code, 2);
  EXPECT_EQ(gbu("--help").code, 0);
  EXPECT_EQ(gbu("gradcheck --scale full").code, 2);
  write("bad_profile.json", R"({"subjects": 4, "colour": "blue"})");
  const auto r = gbu("synth --out " + (dir / "x").string() + " --profile " + (dir / "bad_profile.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("colour"), std::string::npos);
  EXPECT_EQ(gbu("train --data " + (dir / "missing").string() + " --out " + (dir / "m.gbu1").string()).code, 2);
}

TEST_F(Cli, SynthDefaultProfileIsDeterministic) {
  ASSERT_EQ(gbu("synth --out " + (dir / "a").string() + " --seed 5").code, 0);
  ASSERT_EQ(gbu("synth --out " + (dir / "b").string() + " --seed 5").code, 0);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".rsp1") continue;
    ++files;
    const auto bytes = slurp(entry.path());
    EXPECT_EQ(bytes, slurp(dir / "b" / entry.path().filename()));
    const auto record = gbu::data::read_record(entry.path());
    std::uint32_t header = 0;
    std::memcpy(&header, bytes.data() + 4, 4);
    EXPECT_EQ(bytes.size(), gbu::data::rsp1_file_size(header, record.fb, record.fo, record.duration_s));
  }
  EXPECT_EQ(files, 20u);
  const auto manifest = gbu::parse_json_file((dir / "a" / "manifest.json").string());
  EXPECT_EQ(manifest.at("files").size(), 20u);
  EXPECT_EQ(manifest.at("generator").at("seed"), 5);
  EXPECT_EQ(manifest.at("tool_version"), "0.1.0");
  EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
}

TEST_F(Cli, SynthManifestEchoesGroupOffsets) {
  write("profile.json", R"({"subjects": 2, "night_seconds": 240,
                            "response": [[{"offset": 1.5, "slope": 1}, {"offset": 1.5, "slope": 2}, {"offset": 1.5, "slope": 3}],
                                         [{"offset": -0.5, "slope": -1}, {"offset": -0.5, "slope": -2}, {"offset": -0.5, "slope": -3}]]})");
  ASSERT_EQ(gbu("synth --out " + (dir / "d").string() + " --profile " + (dir / "profile.json").string()).code, 0);
  const auto manifest = gbu::parse_json_file((dir / "d" / "manifest.json").string());
  const auto& response = manifest.at("generator").at("response");
  EXPECT_EQ(response[0][2].at("offset"), 1.5);
  EXPECT_EQ(response[1][1].at("slope"), -2.0);
}

TEST_F(Cli, TrainGatedEmitsArtifactsDeterministically) {
  small_dataset();
  const auto cfg = (dir / "run.json").string();
  const auto data = (dir / "data").string();
  const auto r = gbu("train --config " + cfg + " --data " + data + " --out " + (dir / "a.gbu1").string());
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_EQ(gbu("train --config " + cfg + " --data " + data + " --out " + (dir / "b.gbu1").string()).code, 0);
  EXPECT_EQ(slurp(dir / "a.gbu1"), slurp(dir / "b.gbu1"));
  EXPECT_EQ(slurp(dir / "a.gbu1.gate.json"), slurp(dir / "b.gbu1.gate.json"));

  const auto ckpt = gbu::model::load_checkpoint((dir / "a.gbu1").string());
  const std::string hash = ckpt.metadata.at("run_config_hash");
  const auto gate = gbu::parse_json_file((dir / "a.gbu1.gate.json").string());
  EXPECT_EQ(gate.at("config_hash"), hash);
  EXPECT_EQ(gate.at("tool_version"), "0.1.0");
  EXPECT_EQ(gate.at("n_heads"), 2);
  std::ifstream log(dir / "a.gbu1.log.jsonl");
  std::string line;
  std::size_t epochs = 0;
  while (std::getline(log, line)) {
    const auto j = Json::parse(line);
    EXPECT_EQ(j.at("config_hash"), hash);
    EXPECT_EQ(j.at("tool_version"), "0.1.0");
    ++epochs;
  }
  EXPECT_EQ(epochs, 3u);
}

TEST_F(Cli, FlagsOverrideConfigAndEnvironmentSuppliesIt) {
  small_dataset();
  const auto data = (dir / "data").string();
  const auto r = gbu("-v train --data " + data + " --epochs 1 --variant backbone --out " + (dir / "e.gbu1").string(),
                     "GBU_CONFIG=" + (dir / "run.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("GBU_CONFIG"), std::string::npos);
  EXPECT_NE(r.out.find("--epochs overrides train.epochs: 3 -> 1"), std::string::npos) << r.out;
  const auto ckpt = gbu::model::load_checkpoint((dir / "e.gbu1").string());
  EXPECT_EQ(ckpt.config.variant, gbu::model::Variant::kBackbone);
  EXPECT_EQ(ckpt.metadata.at("run_config").at("train").at("epochs"), 1);
  EXPECT_FALSE(fs::exists(dir / "e.gbu1.gate.json"));
}

TEST_F(Cli, GateMapFromBackboneCheckpoint) {
  small_dataset();
  const auto data = (dir / "data").string();
  ASSERT_EQ(gbu("train --config " + (dir / "run.json").string() + " --variant backbone --out " +
                (dir / "bb.gbu1").string() + " --data " + data).code, 0);
  ASSERT_EQ(gbu("gatemap --ckpt " + (dir / "bb.gbu1").string() + " --n-heads 6 --out " + (dir / "six.json").string())
                .code, 0);
  const auto six = gbu::gate::gate_map_from_json(gbu::parse_json_file((dir / "six.json").string()));
  EXPECT_EQ(six.table, gbu::gate::identity_gate_map(2, 3).table);

  ASSERT_EQ(gbu("gatemap --ckpt " + (dir / "bb.gbu1").string() + " --n-heads 2 --out " + (dir / "two.json").string())
                .code, 0);
  const auto two = gbu::parse_json_file((dir / "two.json").string());
  const auto sim = two.at("provenance").at("similarity").get<std::vector<std::vector<double>>>();
  ASSERT_EQ(sim.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(sim[i][i], 1.0);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(sim[i][j], sim[j][i]);
  }
  EXPECT_TRUE(two.contains("config_hash"));
  EXPECT_EQ(gbu("gatemap --ckpt " + (dir / "bb.gbu1").string() + " --n-heads 7 --out " + (dir / "x.json").string())
                .code, 2);
}

TEST_F(Cli, EvalReportsDumpsAndRejectsMismatchedConfig) {
  small_dataset();
  const auto ckpt = (dir / "g.gbu1").string();
  ASSERT_EQ(gbu("train --config " + (dir / "run.json").string() + " --data " + (dir / "data").string() + " --out " +
                ckpt).code, 0);
  const auto report_path = (dir / "report.json").string();
  const auto r = gbu("eval --ckpt " + ckpt + " --group-by gender --dump " + (dir / "dump").string() + " --report " +
                     report_path);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = gbu::parse_json_file(report_path);
  EXPECT_EQ(report.at("split"), "test");
  for (const auto* key : {"corr", "mae", "rmse"}) {
    EXPECT_TRUE(report.at("datasets").at("synth").at("segment_mean").contains(key));
    EXPECT_TRUE(report.at("overall").at("segment_mean").contains(key));
  }
  EXPECT_TRUE(report.contains("group_distribution"));
  EXPECT_EQ(report.at("checkpoint_id"), gbu::model::file_id(ckpt));
  EXPECT_EQ(report.at("tool_version"), "0.1.0");
  EXPECT_EQ(report.at("overall").at("segment_mean").at("segments"), 6);

  std::size_t dumps = 0;
  for (const auto& entry : fs::directory_iterator(dir / "dump")) {
    ++dumps;
    EXPECT_EQ(gbu::eval::read_dump(entry.path()).size(), 480u);
    EXPECT_NE(slurp(entry.path()).find("config_hash=" + report.at("config_hash").get<std::string>()),
              std::string::npos);
  }
  EXPECT_EQ(dumps, 3u);

  write("other.json", R"({"model": {"preset": "tiny", "bert_layers": 2}, "gate": {"n_heads": 2}})");
  const auto mismatch = gbu("eval --ckpt " + ckpt + " --config " + (dir / "other.json").string() + " --report " +
                            (dir / "r2.json").string());
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.out.find("hash_mismatch"), std::string::npos);
  EXPECT_EQ(gbu("eval --ckpt " + ckpt + " --split test --aggregation night --report " + (dir / "r3.json").string() +
                " --config " + (dir / "run.json").string() + " --data " + (dir / "data").string()).code, 0);
  EXPECT_EQ(gbu::parse_json_file((dir / "r3.json").string()).at("aggregation"), "night");
}

TEST_F(Cli, EvalOfOverfitModelOnItsOwnNight) {
  write("profile.json", R"({"subjects": 1, "night_seconds": 600})");
  ASSERT_EQ(gbu("synth --out " + (dir / "data").string() + " --profile " + (dir / "profile.json").string()).code, 0);
  write("run.json", R"({"model": {"preset": "small", "variant": "backbone"}, "train": {"epochs": 500, "seed": 1}})");
  const auto ckpt = (dir / "o.gbu1").string();
  ASSERT_EQ(gbu("train --config " + (dir / "run.json").string() + " --data " + (dir / "data").string() + " --out " +
                ckpt).code, 0);
  ASSERT_EQ(gbu("eval --ckpt " + ckpt + " --report " + (dir / "r.json").string()).code, 0);
  const auto report = gbu::parse_json_file((dir / "r.json").string());
  EXPECT_LT(report.at("overall").at("segment_mean").at("mae").get<double>(), 0.5);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = gbu("gradcheck --scale tiny --seed 0");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("gradcheck passed"), std::string::npos);
}

TEST_F(Cli, InspectReportsCountsAndRejectsTruncatedFiles) {
  write("full.json", R"({"model": {"preset": "full"}})");
  const auto full = gbu("inspect --config " + (dir / "full.json").string());
  ASSERT_EQ(full.code, 0);
  EXPECT_NE(full.out.find("26,821,113"), std::string::npos);
  EXPECT_TRUE(std::regex_search(full.out, std::regex("parameters: [0-9,]+ trainable")));

  small_dataset();
  const auto ckpt = dir / "t.gbu1";
  ASSERT_EQ(gbu("train --config " + (dir / "run.json").string() + " --data " + (dir / "data").string() + " --out " +
                ckpt.string()).code, 0);
  EXPECT_EQ(gbu("inspect --ckpt " + ckpt.string()).code, 0);
  const auto bytes = slurp(ckpt);
  std::ofstream(dir / "cut.gbu1", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const auto cut = gbu("inspect --ckpt " + (dir / "cut.gbu1").string());
  EXPECT_EQ(cut.code, 2);
  EXPECT_NE(cut.out.find("truncated"), std::string::npos);
  std::ofstream(dir / "junk.gbu1", std::ios::binary) << "not a checkpoint";
  EXPECT_EQ(gbu("inspect --ckpt " + (dir / "junk.gbu1").string()).code, 2);
}
