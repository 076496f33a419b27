#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "gdaip/fileio.hpp"
#include "gdaip/trainer.hpp"

namespace gdaip::train {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw InputError("cannot parse value '" + std::string(value) + "' for '" + std::string(key) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw InputError("expected true/false for '" + std::string(key) + "', got '" + std::string(value) + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw InputError("steps must be non-negative");
  if (!(lr0 > 0.0)) throw InputError("lr0 must be positive");
  if (lr_halving_period < 1) throw InputError("lr_halving_period must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InputError("weight_decay must be non-negative");
  if (!(lambda_mme >= 0.0)) throw InputError("lambda_mme must be non-negative");
  if (!(tau > 0.0)) throw InputError("tau must be positive");
  if (!(core_fraction > 0.0 && core_fraction <= 1.0)) throw InputError("core_fraction must lie in (0, 1]");
}

double learning_rate(const TrainConfig& config, int step) {
  return config.lr0 * std::ldexp(1.0, -(step / config.lr_halving_period));
}

void apply_setting(TrainConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "steps") c.steps = parse_number<int>(key, value);
  else if (key == "lr0") c.lr0 = parse_number<double>(key, value);
  else if (key == "lr_halving_period") c.lr_halving_period = parse_number<int>(key, value);
  else if (key == "momentum") c.momentum = parse_number<double>(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, value);
  else if (key == "lambda_mme") c.lambda_mme = parse_number<double>(key, value);
  else if (key == "tau") c.tau = parse_number<double>(key, value);
  else if (key == "core_fraction") c.core_fraction = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "source_only") c.source_only = parse_bool(key, value);
  else throw InputError("unknown training config key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::istream& in, std::string_view source) {
  TrainConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw InputError(std::string(source) + ":" + std::to_string(line_no) + ": expected key=value");
    try {
      apply_setting(c, trim(s.substr(0, eq)), s.substr(eq + 1));
    } catch (const InputError& e) {
      throw InputError(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

void write_config(std::ostream& out, const TrainConfig& c) {
  out << "steps=" << c.steps << '\n'
      << "lr0=" << format_double(c.lr0) << '\n'
      << "lr_halving_period=" << c.lr_halving_period << '\n'
      << "momentum=" << format_double(c.momentum) << '\n'
      << "weight_decay=" << format_double(c.weight_decay) << '\n'
      << "lambda_mme=" << format_double(c.lambda_mme) << '\n'
      << "tau=" << format_double(c.tau) << '\n'
      << "core_fraction=" << format_double(c.core_fraction) << '\n'
      << "seed=" << c.seed << '\n'
      << "source_only=" << (c.source_only ? "true" : "false") << '\n';
}

}  // namespace gdaip::train
