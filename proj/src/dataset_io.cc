#include "ope/dataset_io.h"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace ope {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool is_blank(std::string_view line) { return fields(line).empty(); }

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

std::string_view header_value(std::string_view token, std::string_view key, std::size_t line) {
  if (token.substr(0, key.size()) != key) {
    throw DatasetParseError(line, "expected header token '" + std::string(key) + "...', got '" +
                                      std::string(token) + "'");
  }
  return token.substr(key.size());
}

}  // namespace

DatasetParseError::DatasetParseError(std::size_t line, const std::string& what)
    : std::runtime_error("dataset line " + std::to_string(line) + ": " + what), line_(line) {}

std::string format_real(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string format_state(const State& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) out += ',';
    out += format_real(s[i]);
  }
  return out;
}

State parse_state(std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() > State::kMaxDims) throw std::invalid_argument("state has too many components");
  double values[State::kMaxDims];
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!parse_number(parts[i], values[i])) {
      throw std::invalid_argument("bad state component '" + std::string(parts[i]) + "'");
    }
  }
  return State(std::span<const double>(values, parts.size()));
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  const int H = dataset.horizon();
  out << "H=" << H << " env=" << dataset.meta().env_id << " seed=" << dataset.meta().seed << '\n';
  for (const auto& traj : dataset.trajectories()) {
    for (int t = 0; t < H; ++t) {
      const auto& step = traj.steps[static_cast<std::size_t>(t)];
      out << (t + 1) << ' ' << format_state(step.state) << ' ' << step.action << ' '
          << format_real(step.reward) << ' ' << format_real(step.behavior_prob) << '\n';
    }
    out << (H + 1) << ' ' << format_state(traj.final_state) << "\n\n";
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DatasetParseError(1, "missing header");
  ++line_no;
  const auto head = fields(line);
  if (head.size() != 3) throw DatasetParseError(line_no, "header must be 'H=<int> env=<id> seed=<int>'");
  int H = 0;
  if (!parse_number(header_value(head[0], "H=", line_no), H) || H < 0) {
    throw DatasetParseError(line_no, "bad horizon");
  }
  DatasetMeta meta;
  meta.env_id = std::string(header_value(head[1], "env=", line_no));
  if (!parse_number(header_value(head[2], "seed=", line_no), meta.seed)) {
    throw DatasetParseError(line_no, "bad seed");
  }

  std::vector<Trajectory> trajs;
  Trajectory current;
  bool have_final = false;
  std::size_t traj_start_line = 0;

  auto finish = [&](std::size_t at_line) {
    if (current.steps.empty() && !have_final) return;
    if (current.horizon() != H || !have_final) {
      throw DatasetParseError(at_line, "trajectory starting at line " + std::to_string(traj_start_line) +
                                           " has " + std::to_string(current.horizon()) +
                                           " steps" + (have_final ? "" : " and no final state") +
                                           ", expected " + std::to_string(H));
    }
    trajs.push_back(std::move(current));
    current = Trajectory{};
    have_final = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) {
      finish(line_no);
      continue;
    }
    if (have_final) throw DatasetParseError(line_no, "step after the final-state line");
    if (current.steps.empty()) traj_start_line = line_no;
    const auto f = fields(line);
    int t = 0;
    if (!parse_number(f[0], t)) throw DatasetParseError(line_no, "bad step index");
    const int expected_t = current.horizon() + 1;
    if (t != expected_t) {
      throw DatasetParseError(line_no, "step index " + std::to_string(t) + ", expected " +
                                           std::to_string(expected_t));
    }
    try {
      if (f.size() == 2 && t == H + 1) {
        current.final_state = parse_state(f[1]);
        have_final = true;
        continue;
      }
      if (f.size() != 5) {
        throw DatasetParseError(line_no, "expected 't state action reward behavior_prob', got " +
                                             std::to_string(f.size()) + " fields");
      }
      if (t > H) throw DatasetParseError(line_no, "more than H=" + std::to_string(H) + " steps");
      Step step;
      step.state = parse_state(f[1]);
      if (!parse_number(f[2], step.action) || !parse_number(f[3], step.reward) ||
          !parse_number(f[4], step.behavior_prob)) {
        throw DatasetParseError(line_no, "malformed step fields");
      }
      if (!(step.behavior_prob > 0.0 && step.behavior_prob <= 1.0)) {
        throw DatasetParseError(line_no, "behavior probability outside (0, 1]");
      }
      current.steps.push_back(step);
    } catch (const std::invalid_argument& e) {
      throw DatasetParseError(line_no, e.what());
    }
  }
  finish(line_no);
  if (trajs.empty()) throw DatasetParseError(line_no, "dataset has no trajectories");
  return Dataset(std::move(trajs), H, std::move(meta));
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(out, dataset);
  if (!out) throw std::runtime_error("failed writing " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_dataset(in);
}

}  // namespace ope
