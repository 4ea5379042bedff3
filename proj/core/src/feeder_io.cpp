#include "dcvr/feeder_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include <fmt/format.h>

namespace dcvr {

std::string format_double(double value) {
  // fmt's default presentation is the shortest round-trip representation.
  return fmt::format("{}", value);
}

namespace {

std::string join(const PhaseVector& v) {
  return fmt::format("{} {} {}", format_double(v[0]), format_double(v[1]), format_double(v[2]));
}

std::string join(const ZipCoefficients& k) {
  return fmt::format("{} {} {}", format_double(k.z), format_double(k.i), format_double(k.p));
}

std::string join(const PhaseMatrix& z) {
  std::string s;
  for (std::size_t r = 0; r < kPhases; ++r)
    for (std::size_t c = 0; c < kPhases; ++c) {
      if (!s.empty()) s += ' ';
      s += format_double(z(r, c).real()) + ' ' + format_double(z(r, c).imag());
    }
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Record {
  std::string section;
  int line = 0;
  std::map<std::string, std::pair<std::string, int>> fields;

  [[noreturn]] void fail(const std::string& what, int at = 0) const {
    throw ConfigError(fmt::format("feeder line {}: [{}] {}", at ? at : line, section, what));
  }

  const std::string& raw(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) fail("missing field '" + key + "'");
    return it->second.first;
  }
  bool has(const std::string& key) const { return fields.count(key) != 0; }

  std::vector<double> numbers(const std::string& key, std::size_t count) const {
    const auto& text = raw(key);
    std::vector<double> out;
    const char* p = text.data();
    const char* end = text.data() + text.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) fail("bad number in '" + key + "'", fields.at(key).second);
      out.push_back(v);
      p = next;
    }
    if (out.size() != count)
      fail(fmt::format("field '{}' needs {} values, got {}", key, count, out.size()), fields.at(key).second);
    return out;
  }
  double number(const std::string& key) const { return numbers(key, 1)[0]; }
  int integer(const std::string& key) const {
    const auto& text = raw(key);
    int v = 0;
    auto [next, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || next != text.data() + text.size())
      fail("bad integer in '" + key + "'", fields.at(key).second);
    return v;
  }
  PhaseMask mask(const std::string& key) const {
    try {
      return PhaseMask::parse(raw(key));
    } catch (const std::invalid_argument& e) {
      fail(e.what(), fields.at(key).second);
    }
  }
  PhaseVector phase_vector(const std::string& key, PhaseMask m) const {
    const auto v = numbers(key, 3);
    for (std::size_t p = 0; p < kPhases; ++p)
      if (!m.has(p) && v[p] != 0.0) fail("nonzero value on absent phase in '" + key + "'", fields.at(key).second);
    return PhaseVector(m, {v[0], v[1], v[2]});
  }
  ZipCoefficients zip(const std::string& key) const {
    const auto v = numbers(key, 3);
    return {v[0], v[1], v[2]};
  }
};

}  // namespace

void write_feeder(std::ostream& out, const Feeder& f) {
  out << "# dcvr feeder, per-unit on base_power (kVA) and the primary/secondary base voltages (kV)\n";
  out << "[feeder]\n";
  out << "substation_bus = " << f.substation_bus << '\n';
  out << "v_substation = " << format_double(f.v_substation) << '\n';
  out << "base_power = " << format_double(f.base_power) << '\n';
  out << "base_v_primary = " << format_double(f.base_v_primary) << '\n';
  out << "base_v_secondary = " << format_double(f.base_v_secondary) << '\n';
  for (const auto& b : f.buses) {
    out << "\n[bus]\n";
    out << "id = " << b.id << '\n';
    out << "zone = " << b.zone.str() << '\n';
    out << "phases = " << b.phases.str() << '\n';
    out << "load_mult_p = " << join(b.load_mult_p) << '\n';
    out << "load_mult_q = " << join(b.load_mult_q) << '\n';
    out << "zip_p = " << join(b.zip_p) << '\n';
    out << "zip_q = " << join(b.zip_q) << '\n';
    out << "v_min = " << format_double(b.v_min) << '\n';
    out << "v_max = " << format_double(b.v_max) << '\n';
  }
  for (const auto& br : f.branches) {
    out << "\n[branch]\n";
    out << "from = " << br.from << '\n';
    out << "to = " << br.to << '\n';
    out << "phases = " << br.phases.str() << '\n';
    out << "z = " << join(br.z) << '\n';
  }
  for (const auto& inv : f.inverters) {
    out << "\n[inverter]\n";
    out << "bus = " << inv.bus << '\n';
    out << "s_cap = " << join(inv.s_cap) << '\n';
    out << "p_g = " << join(inv.p_g) << '\n';
  }
  for (const auto& l : f.boundary_links) {
    out << "\n[boundary]\n";
    out << "boundary_bus = " << l.boundary_bus << '\n';
    out << "primary_bus = " << l.primary_bus << '\n';
    out << "secondary_id = " << l.secondary_id << '\n';
  }
}

std::string feeder_to_string(const Feeder& feeder) {
  std::ostringstream os;
  write_feeder(os, feeder);
  return os.str();
}

void save_feeder(const std::filesystem::path& path, const Feeder& feeder) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_feeder(out, feeder);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Feeder read_feeder(std::istream& in) {
  std::vector<Record> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("feeder line {}: unterminated section header", line_no));
      records.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("feeder line {}: expected key = value", line_no));
    if (records.empty()) throw ConfigError(fmt::format("feeder line {}: field outside a section", line_no));
    const auto key = trim(line.substr(0, eq));
    if (!records.back().fields.emplace(key, std::make_pair(trim(line.substr(eq + 1)), line_no)).second)
      throw ConfigError(fmt::format("feeder line {}: duplicate field '{}'", line_no, key));
  }

  Feeder f;
  bool have_header = false;
  for (const auto& r : records) {
    if (r.section == "feeder") {
      if (have_header) r.fail("duplicate section");
      have_header = true;
      f.substation_bus = r.integer("substation_bus");
      if (r.has("v_substation")) f.v_substation = r.number("v_substation");
      if (r.has("base_power")) f.base_power = r.number("base_power");
      if (r.has("base_v_primary")) f.base_v_primary = r.number("base_v_primary");
      if (r.has("base_v_secondary")) f.base_v_secondary = r.number("base_v_secondary");
    } else if (r.section == "bus") {
      Bus b;
      b.id = r.integer("id");
      try {
        b.zone = Zone::parse(r.raw("zone"));
      } catch (const std::invalid_argument& e) {
        r.fail(e.what());
      }
      b.phases = r.mask("phases");
      b.load_mult_p = r.phase_vector("load_mult_p", b.phases);
      b.load_mult_q = r.phase_vector("load_mult_q", b.phases);
      b.zip_p = r.zip("zip_p");
      b.zip_q = r.zip("zip_q");
      if (r.has("v_min")) b.v_min = r.number("v_min");
      if (r.has("v_max")) b.v_max = r.number("v_max");
      f.buses.push_back(b);
    } else if (r.section == "branch") {
      Branch br;
      br.from = r.integer("from");
      br.to = r.integer("to");
      br.phases = r.mask("phases");
      const auto z = r.numbers("z", 18);
      std::array<std::array<Complex, kPhases>, kPhases> m{};
      for (std::size_t k = 0; k < 9; ++k) m[k / 3][k % 3] = {z[2 * k], z[2 * k + 1]};
      br.z = PhaseMatrix(br.phases, m);
      f.branches.push_back(br);
    } else if (r.section == "inverter") {
      Inverter inv;
      inv.bus = r.integer("bus");
      const auto sc = r.numbers("s_cap", 3);
      const auto pg = r.numbers("p_g", 3);
      inv.s_cap = PhaseVector(PhaseMask::abc(), {sc[0], sc[1], sc[2]});
      inv.p_g = PhaseVector(PhaseMask::abc(), {pg[0], pg[1], pg[2]});
      f.inverters.push_back(inv);
    } else if (r.section == "boundary") {
      BoundaryLink l;
      l.boundary_bus = r.integer("boundary_bus");
      l.primary_bus = r.integer("primary_bus");
      l.secondary_id = r.integer("secondary_id");
      f.boundary_links.push_back(l);
    } else {
      r.fail("unknown section");
    }
  }
  if (!have_header) throw ConfigError("feeder: missing [feeder] section");

  // Inverter and link phases follow their buses when those exist; validate()
  // reports the dangling references otherwise.
  for (auto& inv : f.inverters) {
    if (!f.has_bus(inv.bus)) continue;
    const auto m = f.bus(inv.bus).phases;
    inv.s_cap = PhaseVector(m, inv.s_cap.values());
    inv.p_g = PhaseVector(m, inv.p_g.values());
  }
  for (auto& l : f.boundary_links)
    if (f.has_bus(l.boundary_bus)) l.phases = f.bus(l.boundary_bus).phases;
  return f;
}

Feeder feeder_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_feeder(is);
}

Feeder load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open feeder file " + path.string());
  return read_feeder(in);
}

}  // namespace dcvr
