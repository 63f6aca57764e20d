#ifndef PVCAL_CLI_COMMANDS_HPP
#define PVCAL_CLI_COMMANDS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pvcal::cli {

enum ExitCode { kOk = 0, kConfigError = 2, kDomainError = 3, kInternalError = 4 };

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;  // output path (predict/correct) or prefix (simulate); empty = stdout
};

struct PredictOptions {
  std::string config;
  std::string grid;  // "lo:hi:step"
  bool clamp = false;
};

struct SimulateOptions {
  std::string config;
  std::optional<long> reps;
};

struct CorrectOptions {
  std::string config;
  std::string method = "saddlepoint";
  std::string tail_form = "rstar_form";
  std::string input;
};

struct CompareOptions {
  std::string empirical;
  std::string theory;
  std::string empirical_column;
  std::string theory_column;
  long reps = 100000;
};

// Each command throws pvcal::Error on failure; run_cli maps errors to exit codes.
void cmd_predict(const GlobalOptions& g, const PredictOptions& o, std::ostream& out);
void cmd_simulate(const GlobalOptions& g, const SimulateOptions& o, std::ostream& out);
void cmd_correct(const GlobalOptions& g, const CorrectOptions& o, std::ostream& out, std::ostream& err);
void cmd_compare(const GlobalOptions& g, const CompareOptions& o, std::ostream& out);

std::vector<double> parse_grid(const std::string& spec);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pvcal::cli

#endif  // PVCAL_CLI_COMMANDS_HPP
