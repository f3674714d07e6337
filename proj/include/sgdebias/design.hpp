#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "sgdebias/errors.hpp"

namespace sgdebias {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// The (y, z, x) triple of the subgroup logistic model
///   logit P(y = 1 | z, x) = z'beta + x'gamma.
///
/// z holds the subgroup-by-treatment interactions whose coefficients are the
/// subgroup effects. The first `forced` columns of x (intercept and subgroup
/// indicators) are kept in every model and never penalized; the rest are
/// covariates eligible for selection.
struct EncodedDesign {
  VectorXd y;
  MatrixXd z;
  MatrixXd x;
  std::vector<std::string> z_labels;
  std::vector<std::string> x_labels;
  Index forced = 0;

  [[nodiscard]] Index n() const noexcept { return y.size(); }
  [[nodiscard]] Index p1() const noexcept { return z.cols(); }
  [[nodiscard]] Index q() const noexcept { return x.cols(); }
  [[nodiscard]] Index covariates() const noexcept { return x.cols() - forced; }

  /// [z | x], the column order used by every full-width vector and matrix.
  [[nodiscard]] MatrixXd stacked() const {
    MatrixXd w(n(), p1() + q());
    w << z, x;
    return w;
  }

  /// Stacked-column indices that are never penalized: all of z plus the forced x columns.
  [[nodiscard]] std::vector<Index> unpenalized() const {
    std::vector<Index> cols;
    for (Index j = 0; j < p1() + forced; ++j) cols.push_back(j);
    return cols;
  }

  [[nodiscard]] std::vector<std::string> labels() const {
    std::vector<std::string> all = z_labels;
    all.insert(all.end(), x_labels.begin(), x_labels.end());
    return all;
  }

  void validate() const {
    if (z.rows() != y.size() || x.rows() != y.size())
      throw ContractViolation("design blocks disagree on the number of rows");
    if (p1() < 1) throw ContractViolation("design needs at least one subgroup effect column");
    if (forced < 0 || forced > q()) throw ContractViolation("forced column count out of range");
    if (!z.allFinite() || !x.allFinite()) throw ContractViolation("design has non-finite entries");
    for (Index i = 0; i < y.size(); ++i)
      if (y[i] != 0.0 && y[i] != 1.0) throw ContractViolation("outcome must be binary");
    if (static_cast<Index>(z_labels.size()) != p1() || static_cast<Index>(x_labels.size()) != q())
      throw ContractViolation("column labels do not match design width");
  }

  /// Rows `rows` of this design, in the given order.
  [[nodiscard]] EncodedDesign subset(const std::vector<Index>& rows) const {
    EncodedDesign out;
    out.y.resize(static_cast<Index>(rows.size()));
    out.z.resize(static_cast<Index>(rows.size()), p1());
    out.x.resize(static_cast<Index>(rows.size()), q());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto kk = static_cast<Index>(k);
      out.y[kk] = y[rows[k]];
      out.z.row(kk) = z.row(rows[k]);
      out.x.row(kk) = x.row(rows[k]);
    }
    out.z_labels = z_labels;
    out.x_labels = x_labels;
    out.forced = forced;
    return out;
  }
};

}  // namespace sgdebias
