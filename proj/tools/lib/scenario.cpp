#include "scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "dcvr/feeder_io.hpp"

namespace dcvr::app {

void ScenarioTimeSeries::validate() const {
  const auto n = minute.size();
  if (load_p.size() != n || load_q.size() != n || pv.size() != n)
    throw ConfigError("scenario columns have different lengths");
  for (std::size_t k = 0; k < n; ++k) {
    if (load_p[k] < 0.0 || load_q[k] < 0.0 || pv[k] < 0.0)
      throw ConfigError(fmt::format("negative multiplier at minute {}", minute[k]));
    if (k > 0 && minute[k] <= minute[k - 1]) throw ConfigError(fmt::format("minute {} out of order", minute[k]));
  }
}

ScenarioTimeSeries ScenarioTimeSeries::slice(std::size_t start, std::size_t count, std::size_t stride) const {
  if (stride == 0) throw ConfigError("stride must be positive");
  ScenarioTimeSeries out;
  for (std::size_t k = start; k < size() && (count == 0 || out.size() < count); k += stride) {
    out.minute.push_back(minute[k]);
    out.load_p.push_back(load_p[k]);
    out.load_q.push_back(load_q[k]);
    out.pv.push_back(pv[k]);
  }
  return out;
}

namespace {

double bump(double h, double centre, double width) {
  const double d = (h - centre) / width;
  return std::exp(-0.5 * d * d);
}

}  // namespace

ScenarioTimeSeries bundled_daily_profile() {
  ScenarioTimeSeries s;
  for (int t = 0; t < 1440; ++t) {
    const double h = t / 60.0;
    const double load = 0.42 + 0.28 * bump(h, 8.0, 1.5) + 0.2 * bump(h, 13.0, 3.0) + 0.58 * bump(h, 18.5, 2.0);
    const double sun = h < 6.0 || h > 20.0 ? 0.0 : std::max(0.0, std::sin(std::numbers::pi * (h - 6.0) / 14.0));
    s.minute.push_back(t);
    s.load_p.push_back(load);
    s.load_q.push_back(load);
    s.pv.push_back(sun);
  }
  return s;
}

void write_series_csv(std::ostream& out, const ScenarioTimeSeries& s) {
  out << "minute,load_p,load_q,pv\n";
  for (std::size_t k = 0; k < s.size(); ++k)
    out << s.minute[k] << ',' << format_double(s.load_p[k]) << ',' << format_double(s.load_q[k]) << ','
        << format_double(s.pv[k]) << '\n';
}

ScenarioTimeSeries read_series_csv(std::istream& in) {
  ScenarioTimeSeries s;
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line) || line.rfind("minute,load_p,load_q,pv", 0) != 0)
    throw ConfigError("scenario CSV must start with the header minute,load_p,load_q,pv");
  ++lineno;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string cell[4];
    for (auto& c : cell)
      if (!std::getline(row, c, ',')) throw ConfigError(fmt::format("scenario line {}: expected 4 columns", lineno));
    try {
      s.minute.push_back(std::stoi(cell[0]));
      s.load_p.push_back(std::stod(cell[1]));
      s.load_q.push_back(std::stod(cell[2]));
      s.pv.push_back(std::stod(cell[3]));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("scenario line {}: not a number", lineno));
    }
  }
  s.validate();
  return s;
}

ScenarioTimeSeries load_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open scenario {}", path.string()));
  return read_series_csv(in);
}

}  // namespace dcvr::app
