#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "ope/trajectory.h"

namespace ope {

// Line-oriented dataset format:
//
//   H=<int> env=<id> seed=<int>
//   <t> <state> <action> <reward> <behavior_prob>     (t = 1..H)
//   <H+1> <state>                                      (final state)
//   <blank line>
//
// States print as comma-joined components (a discrete id prints as an
// integer). Reals use shortest round-trip formatting, so save/load/save is
// byte-identical.
class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// Shortest round-trip decimal form of a double.
std::string format_real(double x);
std::string format_state(const State& s);
State parse_state(std::string_view text);

}  // namespace ope
