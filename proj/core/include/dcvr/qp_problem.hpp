#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dcvr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Inconsistent or incomplete problem assembly.
class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using SparseMatrix = Eigen::SparseMatrix<double>;

/// min 1/2 x'Hx + c'x + constant  s.t.  A x = b,  lower <= x <= upper,
/// with every variable addressed by a unique name.
class QpProblem {
 public:
  using Term = std::pair<std::size_t, double>;

  std::size_t add_variable(const std::string& name, double lower = -kInf, double upper = kInf);
  std::size_t variable_count() const { return names_.size(); }
  std::size_t equality_count() const { return rhs_.size(); }

  std::optional<std::size_t> find(const std::string& name) const;
  /// Throws AssemblyError for unknown names.
  std::size_t index(const std::string& name) const;
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  void set_bounds(std::size_t i, double lower, double upper);
  double lower(std::size_t i) const { return lower_[i]; }
  double upper(std::size_t i) const { return upper_[i]; }

  void add_linear(std::size_t i, double value) { linear_[i] += value; }
  /// Adds `value` to H(i,j) and H(j,i): the cost gains value*x_i*x_j for i != j
  /// and value/2*x_i^2 for i == j.
  void add_hessian(std::size_t i, std::size_t j, double value);
  void add_constant(double value) { constant_ += value; }

  std::size_t add_equality(std::vector<Term> terms, double rhs, std::string row_name = {});
  const std::string& row_name(std::size_t r) const { return row_names_[r]; }

  /// Full symmetric Hessian.
  SparseMatrix hessian() const;
  Eigen::VectorXd linear() const;
  double constant() const { return constant_; }
  SparseMatrix equality_matrix() const;
  Eigen::VectorXd equality_rhs() const;
  Eigen::VectorXd lower_bounds() const;
  Eigen::VectorXd upper_bounds() const;

  double objective(const Eigen::VectorXd& x) const;

  /// Plain-text sparse dump (variables, Hessian triplets, equality triplets).
  void write_text(std::ostream& out) const;
  static QpProblem read_text(std::istream& in);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> lower_, upper_, linear_;
  double constant_ = 0.0;
  std::vector<Eigen::Triplet<double>> hess_;  // upper triangle, duplicates summed
  std::vector<std::vector<Term>> rows_;
  std::vector<double> rhs_;
  std::vector<std::string> row_names_;
};

}  // namespace dcvr
