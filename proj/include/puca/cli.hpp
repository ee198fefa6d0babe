#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace puca::cli {

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2, kNumerical = 3 };

struct TrainArgs {
  std::string config;  // empty: defaults
  std::string out;     // checkpoint path; falls back to paths.checkpoint
  std::string loss_csv;
  std::optional<std::uint64_t> seed;  // overrides both model and train seeds
  std::optional<int> steps;
  bool allow_non_invariant = false;
  bool quiet = false;
};

struct DenoiseArgs {
  std::string ckpt;
  std::string in;
  std::string out;
  std::optional<int> pd_stride;  // default: pd_test of the checkpoint
  int bit_depth = 8;
};

struct VerifyArgs {
  std::string ckpt;
  std::string config;
  int pixels = 200;
  int size = 64;  // rounded up to the model's spatial multiple
  std::uint64_t seed = 0;
  std::string negative_control;  // "", "pixel-unshuffle" or "p-not-multiple"
  bool with_pd = false;           // test the full PD pipeline instead of the bare network
};

struct RfmapArgs {
  std::string config;
  std::optional<int> levels;
  int size = 128;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool full_attention = false;
};

struct LosscheckArgs {
  std::string config;
  double sigma = 0.1;
  int samples = 10000;
  std::uint64_t seed = 0;
  int size = 32;
  int batch = 16;
  bool identity = false;  // control: g(x) = x
};

struct MetricsArgs {
  std::string a;
  std::string b;
};

// Each command writes its report to `out` and diagnostics to `err`, and
// returns an ExitCode.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_denoise(const DenoiseArgs& args, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err);
int cmd_rfmap(const RfmapArgs& args, std::ostream& out, std::ostream& err);
int cmd_losscheck(const LosscheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_metrics(const MetricsArgs& args, std::ostream& out, std::ostream& err);

// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace puca::cli
