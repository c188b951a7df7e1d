#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stochadj/cli/config.hpp"

namespace stochadj::cli {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct Context {
  Paths paths;
  std::optional<std::uint64_t> seed;  // --seed
  std::optional<int> threads;         // --threads or STOCHADJ_THREADS
  std::ostream* log = nullptr;
};

// Each takes the whole config document, writes its CSV files under
// ctx.paths.out_dir and returns an exit code.
int grad_check(const Json& config, const Context& ctx);
int variance_sweep(const Json& config, const Context& ctx);
int train(const Json& config, const Context& ctx);
int calibrate_ovm(const Json& config, const Context& ctx);
int cost_scaling(const Json& config, const Context& ctx);

// Parses argv, dispatches and maps exceptions to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stochadj::cli
