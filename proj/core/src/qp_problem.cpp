#include "dcvr/qp_problem.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "dcvr/feeder_io.hpp"

namespace dcvr {

std::size_t QpProblem::add_variable(const std::string& name, double lower, double upper) {
  if (!(lower <= upper)) throw AssemblyError(fmt::format("variable {}: lower bound above upper", name));
  const auto idx = names_.size();
  if (!index_.emplace(name, idx).second) throw AssemblyError("duplicate variable " + name);
  names_.push_back(name);
  lower_.push_back(lower);
  upper_.push_back(upper);
  linear_.push_back(0.0);
  return idx;
}

std::optional<std::size_t> QpProblem::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t QpProblem::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw AssemblyError("unknown variable " + name);
  return it->second;
}

void QpProblem::set_bounds(std::size_t i, double lower, double upper) {
  if (!(lower <= upper)) throw AssemblyError(fmt::format("variable {}: lower bound above upper", names_[i]));
  lower_[i] = lower;
  upper_[i] = upper;
}

void QpProblem::add_hessian(std::size_t i, std::size_t j, double value) {
  if (i > j) std::swap(i, j);
  hess_.emplace_back(static_cast<int>(i), static_cast<int>(j), value);
}

std::size_t QpProblem::add_equality(std::vector<Term> terms, double rhs, std::string row_name) {
  for (const auto& [col, v] : terms)
    if (col >= names_.size()) throw AssemblyError(fmt::format("row {}: column {} out of range", row_name, col));
  rows_.push_back(std::move(terms));
  rhs_.push_back(rhs);
  row_names_.push_back(row_name.empty() ? fmt::format("r{}", rhs_.size() - 1) : std::move(row_name));
  return rhs_.size() - 1;
}

SparseMatrix QpProblem::hessian() const {
  const auto n = static_cast<int>(names_.size());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * hess_.size());
  for (const auto& h : hess_) {
    t.push_back(h);
    if (h.row() != h.col()) t.emplace_back(h.col(), h.row(), h.value());
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.prune(0.0);
  return m;
}

Eigen::VectorXd QpProblem::linear() const {
  return Eigen::Map<const Eigen::VectorXd>(linear_.data(), static_cast<Eigen::Index>(linear_.size()));
}

SparseMatrix QpProblem::equality_matrix() const {
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t r = 0; r < rows_.size(); ++r)
    for (const auto& [c, v] : rows_[r]) t.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  SparseMatrix m(static_cast<Eigen::Index>(rows_.size()), static_cast<Eigen::Index>(names_.size()));
  m.setFromTriplets(t.begin(), t.end());
  m.prune(0.0);
  return m;
}

Eigen::VectorXd QpProblem::equality_rhs() const {
  return Eigen::Map<const Eigen::VectorXd>(rhs_.data(), static_cast<Eigen::Index>(rhs_.size()));
}

Eigen::VectorXd QpProblem::lower_bounds() const {
  return Eigen::Map<const Eigen::VectorXd>(lower_.data(), static_cast<Eigen::Index>(lower_.size()));
}

Eigen::VectorXd QpProblem::upper_bounds() const {
  return Eigen::Map<const Eigen::VectorXd>(upper_.data(), static_cast<Eigen::Index>(upper_.size()));
}

double QpProblem::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(hessian() * x) + linear().dot(x) + constant_;
}

void QpProblem::write_text(std::ostream& out) const {
  out << "# dcvr qp: min 1/2 x'Hx + c'x + constant s.t. Ax = b, lower <= x <= upper\n";
  out << "variables " << names_.size() << '\n';
  for (std::size_t i = 0; i < names_.size(); ++i)
    out << i << ' ' << names_[i] << ' ' << format_double(lower_[i]) << ' ' << format_double(upper_[i]) << ' '
        << format_double(linear_[i]) << '\n';
  out << "constant " << format_double(constant_) << '\n';
  const auto h = hessian();
  std::vector<std::string> lines;
  for (int k = 0; k < h.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(h, k); it; ++it)
      if (it.row() <= it.col())
        lines.push_back(fmt::format("{} {} {}", it.row(), it.col(), format_double(it.value())));
  out << "hessian " << lines.size() << '\n';
  for (const auto& l : lines) out << l << '\n';
  out << "equalities " << rhs_.size() << '\n';
  for (std::size_t r = 0; r < rhs_.size(); ++r) out << r << ' ' << row_names_[r] << ' ' << format_double(rhs_[r]) << '\n';
  std::size_t nnz = 0;
  for (const auto& row : rows_) nnz += row.size();
  out << "entries " << nnz << '\n';
  for (std::size_t r = 0; r < rows_.size(); ++r)
    for (const auto& [c, v] : rows_[r]) out << r << ' ' << c << ' ' << format_double(v) << '\n';
}

namespace {

double parse_number(const std::string& tok) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size()) throw AssemblyError("qp text: bad number '" + tok + "'");
  return v;
}

std::size_t parse_count(std::istream& in, const std::string& keyword) {
  std::string word;
  std::size_t count = 0;
  if (!(in >> word >> count) || word != keyword) throw AssemblyError("qp text: expected '" + keyword + "'");
  return count;
}

}  // namespace

QpProblem QpProblem::read_text(std::istream& raw) {
  std::stringstream in;
  for (std::string line; std::getline(raw, line);)
    if (line.empty() || line.front() != '#') in << line << '\n';

  QpProblem qp;
  const auto n = parse_count(in, "variables");
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = 0;
    std::string name, lo, hi, c;
    if (!(in >> idx >> name >> lo >> hi >> c) || idx != i) throw AssemblyError("qp text: bad variable line");
    qp.add_variable(name, parse_number(lo), parse_number(hi));
    qp.add_linear(i, parse_number(c));
  }
  std::string word, value;
  if (!(in >> word >> value) || word != "constant") throw AssemblyError("qp text: expected 'constant'");
  qp.add_constant(parse_number(value));
  const auto nh = parse_count(in, "hessian");
  for (std::size_t k = 0; k < nh; ++k) {
    std::size_t i = 0, j = 0;
    if (!(in >> i >> j >> value) || i >= n || j >= n) throw AssemblyError("qp text: bad hessian entry");
    qp.add_hessian(i, j, parse_number(value));
  }
  const auto m = parse_count(in, "equalities");
  std::vector<std::pair<std::string, double>> rows;
  for (std::size_t r = 0; r < m; ++r) {
    std::size_t idx = 0;
    std::string name;
    if (!(in >> idx >> name >> value) || idx != r) throw AssemblyError("qp text: bad equality line");
    rows.emplace_back(name, parse_number(value));
  }
  std::vector<std::vector<Term>> terms(m);
  const auto nnz = parse_count(in, "entries");
  for (std::size_t k = 0; k < nnz; ++k) {
    std::size_t r = 0, c = 0;
    if (!(in >> r >> c >> value) || r >= m || c >= n) throw AssemblyError("qp text: bad entry");
    terms[r].emplace_back(c, parse_number(value));
  }
  for (std::size_t r = 0; r < m; ++r) qp.add_equality(std::move(terms[r]), rows[r].second, rows[r].first);
  return qp;
}

}  // namespace dcvr
