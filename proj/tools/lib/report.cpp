#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "dcvr/feeder_io.hpp"

namespace dcvr::app {

namespace {

std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace

void write_steps_csv(std::ostream& out, const RunReport& report) {
  out << "minute,p_sub_kw,vmin_a,vmin_b,vmin_c,vmax_a,vmax_b,vmax_c,iterations,converged,violations\n";
  for (const auto& s : report.steps) {
    out << s.minute << ',' << format_double(s.p_sub_kw);
    for (double v : s.vmin) out << ',' << cell(v);
    for (double v : s.vmax) out << ',' << cell(v);
    out << ',' << s.iterations << ',' << (s.converged ? 1 : 0) << ',' << s.violations << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<RunReport>& reports) {
  out << "strategy,steps,energy_kwh,reduction_pct,vmin,vmax,violation_steps,nonconverged_steps,mean_iterations,"
         "max_iterations,failed_step,config_hash\n";
  for (const auto& r : reports) {
    long total = 0;
    int most = 0;
    for (const auto& s : r.steps) {
      total += s.iterations;
      most = std::max(most, s.iterations);
    }
    const double mean = r.steps.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(r.steps.size());
    out << r.strategy << ',' << r.steps.size() << ',' << format_double(r.energy_kwh) << ','
        << format_double(r.reduction_pct) << ',' << (r.steps.empty() ? "" : format_double(r.min_voltage())) << ','
        << (r.steps.empty() ? "" : format_double(r.max_voltage())) << ',' << r.violation_steps() << ','
        << r.nonconverged_steps() << ',' << format_double(mean) << ',' << most << ',' << r.failed_step << ','
        << r.config_hash << '\n';
  }
}

void write_voltage_csv(std::ostream& out, const std::vector<RunReport>& reports) {
  out << "strategy,minute,bus,phase,v\n";
  for (const auto& r : reports)
    for (const auto& s : r.edge_voltages)
      out << r.strategy << ',' << s.minute << ',' << s.bus << ',' << phase_letter(s.phase) << ',' << format_double(s.v)
          << '\n';
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return out;
}

std::vector<std::filesystem::path> emit_report(const std::vector<RunReport>& reports, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::filesystem::path& path, auto&& body) {
    auto out = open_output(path);
    body(out);
    out.flush();
    if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
    written.push_back(path);
  };
  for (const auto& r : reports) emit(dir / fmt::format("steps_{}.csv", r.strategy), [&](std::ostream& o) { write_steps_csv(o, r); });
  emit(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, reports); });
  emit(dir / "voltages.csv", [&](std::ostream& o) { write_voltage_csv(o, reports); });
  return written;
}

}  // namespace dcvr::app
