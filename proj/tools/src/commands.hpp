#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace gbu::cli {

/// Bad flags, configs or input files; main maps it to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct SynthArgs {
  std::string out;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::optional<std::string> config;
  std::optional<std::string> data;
  std::optional<std::string> variant;
  std::string out;
  std::optional<std::string> gate_out;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
};

struct GateMapArgs {
  std::string ckpt;
  std::optional<std::string> data;
  std::size_t n_heads = 0;
  std::string out;
};

struct EvalArgs {
  std::string ckpt;
  std::optional<std::string> config;
  std::optional<std::string> data;
  std::optional<std::string> gate_map;
  std::optional<std::string> group_by;
  std::optional<std::string> dump;
  std::optional<std::string> split;
  std::optional<std::string> aggregation;
  std::string report;
};

struct GradCheckArgs {
  std::string scale = "tiny";
  std::uint64_t seed = 0;
};

struct InspectArgs {
  std::optional<std::string> ckpt;
  std::optional<std::string> config;
};

int cmd_synth(const SynthArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_gatemap(const GateMapArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_gradcheck(const GradCheckArgs& args);
int cmd_inspect(const InspectArgs& args);

}  // namespace gbu::cli
