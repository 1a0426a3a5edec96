#include "ivdr/dataset.hpp"

#include <cmath>
#include <set>

#include "ivdr/errors.hpp"

namespace ivdr {

namespace {
constexpr int kEffectModelParams = 2;  // (psi_c, psi_v)
}

Dataset::Dataset(Eigen::MatrixXd W, Eigen::VectorXd z, Eigen::VectorXd a,
                 Eigen::VectorXd y, std::vector<std::string> covariate_names,
                 int modifier_index)
    : W_(std::move(W)),
      z_(std::move(z)),
      a_(std::move(a)),
      y_(std::move(y)),
      names_(std::move(covariate_names)),
      modifier_(modifier_index) {
  const auto n = y_.size();
  if (W_.rows() != n || z_.size() != n || a_.size() != n)
    throw SpecError("inconsistent row counts across W, z, a, y");
  if (W_.cols() != static_cast<Eigen::Index>(names_.size()))
    throw SpecError("covariate_names length does not match W columns");
  if (modifier_ < 0 || modifier_ >= W_.cols())
    throw SpecError("modifier index out of range");

  for (Eigen::Index i = 0; i < n; ++i) {
    if (z_[i] != 0.0 && z_[i] != 1.0)
      throw InvalidTreatmentCoding("z must be 0 or 1 at row " + std::to_string(i));
    if (a_[i] != 0.0 && a_[i] != 1.0)
      throw InvalidTreatmentCoding("a must be 0 or 1 at row " + std::to_string(i));
    if (!std::isfinite(y_[i])) throw MissingData(static_cast<std::size_t>(i), "y");
    for (Eigen::Index j = 0; j < W_.cols(); ++j)
      if (!std::isfinite(W_(i, j)))
        throw MissingData(static_cast<std::size_t>(i), names_[static_cast<std::size_t>(j)]);
  }

  if (n < 2 * kEffectModelParams)
    throw DegenerateDesign("need at least " + std::to_string(2 * kEffectModelParams) +
                           " rows, got " + std::to_string(n));
  const double zsum = z_.sum();
  if (zsum == 0.0 || zsum == static_cast<double>(n))
    throw DegenerateDesign("instrument arm is empty (all z identical)");
}

Observation Dataset::row(int i) const {
  return Observation{W_.row(i).transpose(), z_[i], a_[i], y_[i]};
}

Dataset Dataset::subset(const std::vector<int>& idx) const {
  const int m = static_cast<int>(idx.size());
  Eigen::MatrixXd W(m, W_.cols());
  Eigen::VectorXd z(m), a(m), y(m);
  for (int i = 0; i < m; ++i) {
    W.row(i) = W_.row(idx[i]);
    z[i] = z_[idx[i]];
    a[i] = a_[idx[i]];
    y[i] = y_[idx[i]];
  }
  return Dataset(std::move(W), std::move(z), std::move(a), std::move(y), names_, modifier_);
}

Dataset validate_dataset(const csv::Table& raw, const std::string& modifier_name) {
  const int iy = raw.col_index("y");
  const int iz = raw.col_index("z");
  const int ia = raw.col_index("a");
  if (iy < 0) throw SpecError("missing required column 'y'");
  if (iz < 0) throw SpecError("missing required column 'z'");
  if (ia < 0) throw SpecError("missing required column 'a'");

  std::vector<int> wcols;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < raw.columns.size(); ++j) {
    if (static_cast<int>(j) == iy || static_cast<int>(j) == iz || static_cast<int>(j) == ia)
      continue;
    wcols.push_back(static_cast<int>(j));
    names.push_back(raw.columns[j]);
  }
  if (wcols.empty()) throw SpecError("need at least one covariate column besides y, z, a");

  int modifier = -1;
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == modifier_name) modifier = static_cast<int>(j);
  if (modifier < 0)
    throw SpecError("modifier column '" + modifier_name + "' not found among covariates");

  const int n = static_cast<int>(raw.rows.size());
  Eigen::MatrixXd W(n, static_cast<int>(wcols.size()));
  Eigen::VectorXd z(n), a(n), y(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = raw.rows[static_cast<std::size_t>(i)];
    // NaN cells are reported with their column name before any coding check
    for (std::size_t j = 0; j < raw.columns.size(); ++j)
      if (std::isnan(r[j])) throw MissingData(static_cast<std::size_t>(i), raw.columns[j]);
    y[i] = r[static_cast<std::size_t>(iy)];
    z[i] = r[static_cast<std::size_t>(iz)];
    a[i] = r[static_cast<std::size_t>(ia)];
    for (std::size_t j = 0; j < wcols.size(); ++j)
      W(i, static_cast<int>(j)) = r[static_cast<std::size_t>(wcols[j])];
  }
  return Dataset(std::move(W), std::move(z), std::move(a), std::move(y),
                 std::move(names), modifier);
}

ModelSpec main_terms_spec(const Dataset& ds, ModelRole role, bool with_z,
                          bool with_z_modifier) {
  ModelSpec spec;
  spec.role = role;
  spec.terms.push_back(Term::intercept());
  if (with_z) spec.terms.push_back(Term::z());
  for (int j = 0; j < ds.n_cov(); ++j) spec.terms.push_back(Term::covariate(j));
  if (with_z_modifier) spec.terms.push_back(Term::z_covariate(ds.modifier_index()));
  return spec;
}

Eigen::MatrixXd design_matrix(const Dataset& ds, const ModelSpec& spec,
                              std::optional<double> z_override) {
  const int n = ds.n();
  Eigen::MatrixXd X(n, static_cast<int>(spec.terms.size()));
  Eigen::VectorXd zcol = ds.z();
  if (z_override) zcol.setConstant(*z_override);

  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const Term& term = spec.terms[t];
    const int j = static_cast<int>(t);
    switch (term.kind) {
      case TermKind::Intercept:
        X.col(j).setOnes();
        break;
      case TermKind::Covariate:
        if (term.col < 0 || term.col >= ds.n_cov())
          throw SpecError("term references unknown covariate column");
        X.col(j) = ds.W().col(term.col);
        break;
      case TermKind::Z:
        X.col(j) = zcol;
        break;
      case TermKind::ZCovariate:
        if (term.col < 0 || term.col >= ds.n_cov())
          throw SpecError("term references unknown covariate column");
        X.col(j) = zcol.cwiseProduct(ds.W().col(term.col));
        break;
    }
  }
  return X;
}

}  // namespace ivdr
