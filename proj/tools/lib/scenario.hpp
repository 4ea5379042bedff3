#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "dcvr/powerflow.hpp"

namespace dcvr::app {

/// Global load and PV multipliers at 1-minute resolution.
struct ScenarioTimeSeries {
  std::vector<int> minute;
  std::vector<double> load_p, load_q, pv;

  std::size_t size() const { return minute.size(); }
  Multipliers at(std::size_t k) const { return {load_p[k], load_q[k], pv[k]}; }

  /// Throws ConfigError on unequal lengths, negative multipliers or
  /// non-increasing timestamps.
  void validate() const;
  /// Every `stride`-th step starting at `start`, at most `count` of them (0 means all).
  ScenarioTimeSeries slice(std::size_t start, std::size_t count, std::size_t stride) const;
};

/// Synthetic 1440-minute day: morning and evening load peaks, a midday
/// shoulder and a PV bell between 06:00 and 20:00. Fixture data only.
ScenarioTimeSeries bundled_daily_profile();

/// CSV with header minute,load_p,load_q,pv.
void write_series_csv(std::ostream& out, const ScenarioTimeSeries& s);
ScenarioTimeSeries read_series_csv(std::istream& in);
ScenarioTimeSeries load_series(const std::filesystem::path& path);

}  // namespace dcvr::app
