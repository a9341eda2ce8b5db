#pragma once

#include <stdexcept>
#include <string>

namespace tddsync {

enum class ErrorKind {
  invalid_config,
  config_parse,
  placement_infeasible,
  covariance,
  degenerate_channel,
  measurement_degenerate,
  schedule_incomplete,
  filter_singular,
  unsolvable,
  statistics_unstable,
};

const char* to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind; every module reports failures through it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tddsync
