#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "benchmark.hpp"

namespace dcvr::app {

// Report CSVs, one row per record:
//   steps_<strategy>.csv  minute,p_sub_kw,vmin_a,vmin_b,vmin_c,vmax_a,vmax_b,vmax_c,iterations,converged,violations
//   summary.csv           strategy,steps,energy_kwh,reduction_pct,vmin,vmax,violation_steps,nonconverged_steps,
//                         mean_iterations,max_iterations,failed_step,config_hash
//   voltages.csv          strategy,minute,bus,phase,v   (leaf buses only)
// Missing phases are written as empty cells.

void write_steps_csv(std::ostream& out, const RunReport& report);
void write_summary_csv(std::ostream& out, const std::vector<RunReport>& reports);
void write_voltage_csv(std::ostream& out, const std::vector<RunReport>& reports);

/// Writes all report files into `dir`, creating it. Throws std::runtime_error
/// naming the path on I/O failure. Returns the files written.
std::vector<std::filesystem::path> emit_report(const std::vector<RunReport>& reports, const std::filesystem::path& dir);

/// Opens `path` for writing or throws with the path in the message.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace dcvr::app
