#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <unistd.h>

#include "smorm/checkpoint.hpp"
#include "smorm/cli.hpp"
#include "smorm/config.hpp"
#include "smorm/error.hpp"
#include "smorm/records.hpp"

using namespace smorm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("smorm_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "smorm-lab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

// Small and quick.
RunConfig tiny_config() {
  RunConfig c;
  c.world.d_z = 4;
  c.world.K = 2;
  c.world.hidden = 8;
  c.data.n_train_pairs = 200;
  c.data.n_train_attrs = 200;
  c.data.n_eval = 100;
  c.model.hidden = {8};
  c.model.embed_dim = 4;
  c.train.steps = 40;
  return c;
}

}  // namespace

TEST(Config, DefaultsEchoRoundTrip) {
  RunConfig c;
  const std::string ini = config_to_ini(c);
  EXPECT_EQ(config_to_ini(parse_config(ini)), ini);
}

TEST(Config, ParsedValuesLand) {
  RunConfig c = parse_config("[world]\nkind = spurious\nK = 4\nrho = 0.5\n[sweep]\nvalues = 0.5, 2\n");
  EXPECT_EQ(c.world.kind, "spurious");
  EXPECT_EQ(c.world.K, 4u);
  EXPECT_EQ(c.world.rho, 0.5);
  EXPECT_EQ(c.sweep.values, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(config_to_ini(parse_config(config_to_ini(c))), config_to_ini(c));
}

TEST(Config, RejectsUnknownAndMalformed) {
  EXPECT_THROW(parse_config("[world]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[nowhere]\nK = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[world]\nK = -3\n"), ConfigError);
  EXPECT_THROW(parse_config("[world]\nkind = flat\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nschema = other/v9\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nmode = nonsense\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/smorm.ini"), ConfigError);
}

TEST(Config, SetValueOverrides) {
  RunConfig c;
  set_config_value(c, "train", "lambda_multi", "0.25");
  set_config_value(c, "model", "hidden", "8,4");
  EXPECT_EQ(c.train.lambda_multi, 0.25);
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{8, 4}));
  EXPECT_THROW(set_config_value(c, "train", "lambda", "1"), ConfigError);
}

TEST(CliRun, ExitCodes) {
  const fs::path d = temp_dir("exit");
  EXPECT_EQ(run_cli({"gen-data", "--out", (d / "a").string(), "--set", "world.bogus=1"}), 2);
  EXPECT_EQ(run_cli({"gen-data", "--out", (d / "a").string(), "--set", "noequals"}), 2);
  EXPECT_EQ(run_cli({"verify", "--out", (d / "b").string(), "--set", "verify.theorem2_seeds=1"}), 2);
  EXPECT_EQ(run_cli({"sweep", "--out", (d / "c").string(), "--set", "sweep.values="}), 2);
  EXPECT_EQ(run_cli({"frobnicate"}), 2);
  EXPECT_EQ(run_cli({"train", "--out", (d / "d").string()}), 2);  // --data missing
  EXPECT_EQ(run_cli({"train", "--out", (d / "d").string(), "--data", (d / "none").string()}), 2);
  EXPECT_EQ(run_cli({"bon", "--out", (d / "e").string(), "--checkpoint", (d / "none.json").string()}), 2);
  fs::remove_all(d);
}

TEST(CliRun, GenDataWithZeroRecordsWritesHeaders) {
  const fs::path d = temp_dir("zero");
  RunConfig c = tiny_config();
  c.data.n_train_pairs = 0;
  c.data.n_train_attrs = 0;
  c.data.n_eval = 0;
  cli::cmd_gen_data(c, d.string());
  DatasetHeader h;
  EXPECT_TRUE(read_pairs((d / "train.pairs.tsv").string(), &h).empty());
  EXPECT_EQ(h.d_z, 4u);
  EXPECT_EQ(h.K, 2u);
  EXPECT_TRUE(read_attrs((d / "ood_eval.attrs.tsv").string()).empty());
  EXPECT_EQ(read_json(d / "manifest.json")["files"].size(), 6u);
  EXPECT_EQ(parse_config(slurp(d / "config.ini")).data.n_eval, 0u);
  fs::remove_all(d);
}

TEST(CliRun, ZeroStepTrainKeepsInitialization) {
  const fs::path d = temp_dir("init");
  RunConfig c = tiny_config();
  c.train.steps = 0;
  cli::cmd_gen_data(c, (d / "data").string());
  RunConfig c2 = c;
  c2.data.n_train_pairs = 50;
  cli::cmd_gen_data(c2, (d / "data2").string());
  cli::cmd_train(c, (d / "data").string(), (d / "t1").string());
  cli::cmd_train(c, (d / "data2").string(), (d / "t2").string());
  // Different data, no steps: the checkpoint is the seeded initialization.
  EXPECT_EQ(slurp(d / "t1" / "checkpoint.json"), slurp(d / "t2" / "checkpoint.json"));
  EXPECT_EQ(slurp(d / "t1" / "history.csv"), "step,bt_loss,mse_loss,total\n");
  EXPECT_EQ(read_json(d / "t1" / "history.json")["rows"], 0);
  fs::remove_all(d);
}

TEST(CliRun, TrainWritesHistoryAndEval) {
  const fs::path d = temp_dir("train");
  RunConfig c = tiny_config();
  cli::cmd_gen_data(c, (d / "data").string());
  cli::cmd_train(c, (d / "data").string(), (d / "t").string());
  std::ifstream in(d / "t" / "history.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line, "step,bt_loss,mse_loss,total");
  while (std::getline(in, line)) ++rows;
  EXPECT_GT(rows, 0u);
  EXPECT_EQ(read_json(d / "t" / "history.json")["rows"], rows);
  const json ev = read_json(d / "t" / "eval.json");
  EXPECT_TRUE(ev.contains("id_eval"));
  EXPECT_TRUE(ev.contains("ood_eval"));
  const SmormModel m = load_checkpoint((d / "t" / "checkpoint.json").string());
  EXPECT_EQ(m.K(), 2u);
  EXPECT_EQ(m.input_dim(), 4u);

  // multi_only needs the attrs file.
  fs::remove(d / "data" / "train.attrs.tsv");
  RunConfig mo = c;
  mo.train.mode = TrainingMode::multi_only;
  EXPECT_THROW(cli::cmd_train(mo, (d / "data").string(), (d / "t2").string()), ConfigError);
  fs::remove_all(d);
}

TEST(CliRun, OnePointSweepReproducesTrain) {
  const fs::path d = temp_dir("sweep1");
  RunConfig c = tiny_config();
  c.sweep.values = {1.0};
  c.sweep.inner = {1.0};
  cli::cmd_gen_data(c, (d / "data").string());
  cli::cmd_train(c, (d / "data").string(), (d / "t").string());
  cli::cmd_sweep(c, (d / "s").string());
  const json ev = read_json(d / "t" / "eval.json");
  std::ifstream in(d / "s" / "sweep.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::vector<std::string> cells;
  std::stringstream ss(row);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 5u);
  EXPECT_EQ(std::stod(cells[1]), ev["id_eval"]["pref_acc"].get<double>());
  EXPECT_EQ(std::stod(cells[2]), ev["ood_eval"]["pref_acc"].get<double>());
  const json sj = read_json(d / "s" / "sweep.json");
  EXPECT_EQ(sj["inner_spread"].get<double>(), 0.0);
  EXPECT_TRUE(sj["edges"].empty());
  fs::remove_all(d);
}

TEST(CliRun, ReportShiftsCurvesToZero) {
  const fs::path d = temp_dir("report");
  fs::create_directories(d / "r1");
  fs::create_directories(d / "r2");
  std::ofstream(d / "r1" / "history.csv") << "step,bt_loss\n0,0.75\n1,0.5\n2,0.25\n";
  std::ofstream(d / "r2" / "bon.csv") << "n,kl,gold\n1,0,1.5\n2,0.19,2.5\n";
  cli::cmd_report({(d / "r1").string(), (d / "r2").string()}, (d / "out").string());
  std::ifstream in(d / "out" / "report.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "run_id,curve,x,metric,value");
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "r1,history,0,bt_loss,0");
  EXPECT_EQ(lines[2], "r1,history,2,bt_loss,-0.5");
  EXPECT_EQ(lines[3], "r2,bon,1,kl,0");
  EXPECT_EQ(lines[5], "r2,bon,1,gold,0");
  EXPECT_EQ(lines[6], "r2,bon,2,gold,1");
  EXPECT_EQ(read_json(d / "out" / "report.json")["runs"].size(), 2u);
  EXPECT_THROW(cli::cmd_report({(d / "missing").string()}, (d / "out2").string()), ConfigError);
  fs::remove_all(d);
}
