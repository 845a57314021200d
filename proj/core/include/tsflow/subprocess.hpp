#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tsflow {

struct ProcessOptions {
  std::chrono::milliseconds timeout{600000};
  std::size_t stderr_tail_bytes = 8 * 1024;
  std::size_t stdout_limit_bytes = 64 * 1024 * 1024;
};

struct ProcessResult {
  /// Set when fork/exec itself failed; nothing else is meaningful then.
  std::optional<std::string> spawn_error;
  bool timed_out = false;
  /// Exit status, or -signal when killed by a signal.
  int exit_code = 0;
  std::string stdout_text;
  bool stdout_truncated = false;
  /// Last stderr_tail_bytes of the child's stderr.
  std::string stderr_tail;
};

/// Runs `argv` (PATH lookup on argv[0]), writes `stdin_text` to the child's
/// stdin and closes it, and collects output until exit or timeout. On timeout
/// the child's whole process group is killed.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& stdin_text,
                          const ProcessOptions& options = {});

}  // namespace tsflow
