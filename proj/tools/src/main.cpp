#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>

#include "commands.hpp"
#include "gbu/common/error.hpp"
#include "gbu/common/hash.hpp"

using namespace gbu::cli;

int main(int argc, char** argv) {
  CLI::App app{"Blood oxygen estimation from breathing signals"};
  app.set_version_flag("--version", std::string(gbu::kToolVersion));
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log every epoch and override");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic RSP1 dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--profile", synth.profile, "Generator profile JSON");
  s->add_option("--seed", synth.seed, "Override the profile seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "Run config JSON (default: $GBU_CONFIG)");
  t->add_option("--data", train.data, "RSP1 directory");
  t->add_option("--variant", train.variant, "backbone | cnn | varaug | gated");
  t->add_option("--out", train.out, "Checkpoint path")->required();
  t->add_option("--gate-out", train.gate_out, "Gate map path (gated; default <out>.gate.json)");
  t->add_option("--epochs", train.epochs, "Override train.epochs");
  t->add_option("--seed", train.seed, "Override train.seed");
  t->add_option("--lr", train.lr, "Override train.lr");

  GateMapArgs gatemap;
  auto* g = app.add_subcommand("gatemap", "Derive a gate map from gradient similarity");
  g->add_option("--ckpt", gatemap.ckpt, "Pretrained one-head checkpoint")->required();
  g->add_option("--data", gatemap.data, "RSP1 directory (default: the checkpoint's data.dir)");
  g->add_option("--n-heads", gatemap.n_heads, "Number of heads N")->required();
  g->add_option("--out", gatemap.out, "Gate map JSON")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--ckpt", eval.ckpt, "Checkpoint")->required();
  e->add_option("--config", eval.config, "Run config; its model must match the checkpoint");
  e->add_option("--data", eval.data, "RSP1 directory (default: the checkpoint's data.dir)");
  e->add_option("--gate-map", eval.gate_map, "Gate map JSON (default: the one stored in the checkpoint)");
  e->add_option("--group-by", eval.group_by, "Record variable for grouped distributions");
  e->add_option("--dump", eval.dump, "Directory for per-night TSV dumps");
  e->add_option("--split", eval.split, "all | train | test");
  e->add_option("--aggregation", eval.aggregation, "segment | night");
  e->add_option("--report", eval.report, "Report JSON path")->required();

  GradCheckArgs gradcheck;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every kernel and the tiny models");
  c->add_option("--scale", gradcheck.scale, "Only tiny is supported");
  c->add_option("--seed", gradcheck.seed, "Seed for inputs and sampled coordinates");

  InspectArgs inspect;
  auto* i = app.add_subcommand("inspect", "Print config, parameter count and tensor inventory");
  i->add_option("--ckpt", inspect.ckpt, "GBU1 checkpoint");
  i->add_option("--config", inspect.config, "Run config (builds the model instead of reading one)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(train);
    if (*g) return cmd_gatemap(gatemap);
    if (*e) return cmd_eval(eval);
    if (*c) return cmd_gradcheck(gradcheck);
    if (*i) return cmd_inspect(inspect);
  } catch (const UsageError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitUsage;
  } catch (const gbu::Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitFailure;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitFailure;
  }
  return kExitUsage;
}
