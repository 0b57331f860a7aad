#pragma once

#include <string>

#include "tkz/tensor.hpp"

namespace tkz::cli {

/// Runs one of the named experiment protocols and writes per-run trace CSVs
/// plus a summary.json (median and interquartile band per traced iteration)
/// under out_dir. iters_override = 0 keeps the protocol's default budget.
void run_experiment(const std::string& protocol, Index trials, Index iters_override,
                    std::uint64_t base_seed, Index trace_every, const std::string& out_dir);

} // namespace tkz::cli
