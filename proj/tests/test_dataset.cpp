#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "ivdr/csv.hpp"
#include "ivdr/dataset.hpp"
#include "ivdr/errors.hpp"

using namespace ivdr;

namespace {

csv::Table table_from(const std::string& text) { return csv::parse(text); }

Dataset small_dataset() {
  return validate_dataset(table_from("y,z,a,x1,v\n"
                                     "1.0,0,0,0.5,2\n"
                                     "2.0,1,1,-1.0,-1\n"
                                     "3.0,0,1,0.0,0.5\n"
                                     "4.0,1,0,2.0,1.5\n"),
                          "v");
}

}  // namespace

TEST_CASE("well-formed table validates and preserves order") {
  const Dataset ds = small_dataset();
  CHECK(ds.n() == 4);
  CHECK(ds.n_cov() == 2);
  CHECK(ds.modifier_index() == 1);
  CHECK(ds.y()[2] == 3.0);
  CHECK(ds.z()[1] == 1.0);
  CHECK(ds.W()(0, 0) == 0.5);
  CHECK(ds.modifier()[0] == 2.0);
  const Observation o = ds.row(3);
  CHECK(o.y == 4.0);
  CHECK(o.w[1] == 1.5);
}

TEST_CASE("non-binary treatment coding is rejected") {
  CHECK_THROWS_AS(
      validate_dataset(table_from("y,z,a,v\n1,0,2,0\n2,1,1,1\n3,0,0,2\n4,1,1,3\n"), "v"),
      InvalidTreatmentCoding);
  CHECK_THROWS_AS(
      validate_dataset(table_from("y,z,a,v\n1,0.5,1,0\n2,1,1,1\n3,0,0,2\n4,1,1,3\n"), "v"),
      InvalidTreatmentCoding);
}

TEST_CASE("one-arm instrument is a degenerate design") {
  CHECK_THROWS_AS(
      validate_dataset(table_from("y,z,a,v\n1,1,0,0\n2,1,1,1\n3,1,0,2\n4,1,1,3\n"), "v"),
      DegenerateDesign);
}

TEST_CASE("missing cells are rejected with row and column") {
  try {
    validate_dataset(table_from("y,z,a,v\n1,0,0,0\n2,1,1,\n3,0,0,2\n4,1,1,3\n"), "v");
    FAIL("expected MissingData");
  } catch (const MissingData& e) {
    CHECK(e.row == 1);
    CHECK(e.column == "v");
  }
}

TEST_CASE("schema requirements") {
  CHECK_THROWS_AS(validate_dataset(table_from("y,z,v\n1,0,0\n"), "v"), SpecError);
  CHECK_THROWS_AS(validate_dataset(table_from("y,z,a,x\n1,0,0,0\n"), "v"), SpecError);
  // too few rows for the two-parameter effect model
  CHECK_THROWS_AS(
      validate_dataset(table_from("y,z,a,v\n1,0,0,0\n2,1,1,1\n3,0,1,2\n"), "v"),
      DegenerateDesign);
}

TEST_CASE("design matrix materializes terms in order") {
  const Dataset ds = small_dataset();

  ModelSpec icpt{ModelRole::OutcomeMy, {Term::intercept()}, FitMode::Parametric};
  const Eigen::MatrixXd ones = design_matrix(ds, icpt);
  CHECK(ones.rows() == 4);
  CHECK(ones.cols() == 1);
  CHECK((ones.array() == 1.0).all());

  ModelSpec iv{ModelRole::OutcomeMy, {Term::intercept(), Term::covariate(1)},
               FitMode::Parametric};
  const Eigen::MatrixXd X = design_matrix(ds, iv);
  CHECK(X(0, 0) == 1.0);
  CHECK(X(0, 1) == 2.0);
  CHECK(X(1, 0) == 1.0);
  CHECK(X(1, 1) == -1.0);
}

TEST_CASE("z override recomputes every z-involving column") {
  const Dataset ds = small_dataset();
  ModelSpec spec{ModelRole::OutcomeMu,
                 {Term::intercept(), Term::covariate(1), Term::z(), Term::z_covariate(1)},
                 FitMode::Parametric};
  const Eigen::MatrixXd X1 = design_matrix(ds, spec, 1.0);
  for (int i = 0; i < 4; ++i) {
    CHECK(X1(i, 2) == 1.0);
    CHECK(X1(i, 3) == ds.modifier()[i]);
  }
  const Eigen::MatrixXd X0 = design_matrix(ds, spec, 0.0);
  const Eigen::MatrixXd Xobs = design_matrix(ds, spec);
  // override changes only the z-involving columns
  CHECK(X1.col(0) == X0.col(0));
  CHECK(X1.col(1) == X0.col(1));
  CHECK((X0.col(2).array() == 0.0).all());
  for (int i = 0; i < 4; ++i) CHECK(Xobs(i, 2) == ds.z()[i]);
}

TEST_CASE("unknown column in a term is a spec error") {
  const Dataset ds = small_dataset();
  ModelSpec bad{ModelRole::OutcomeMy, {Term::covariate(7)}, FitMode::Parametric};
  CHECK_THROWS_AS(design_matrix(ds, bad), SpecError);
}

TEST_CASE("validate - serialize - revalidate is the identity on contents") {
  const Dataset ds = small_dataset();
  std::ostringstream out;
  out << "y,z,a";
  for (const auto& nm : ds.covariate_names()) out << "," << nm;
  out << "\n";
  for (int i = 0; i < ds.n(); ++i) {
    out << csv::format_value(ds.y()[i]) << "," << csv::format_value(ds.z()[i]) << ","
        << csv::format_value(ds.a()[i]);
    for (int j = 0; j < ds.n_cov(); ++j) out << "," << csv::format_value(ds.W()(i, j));
    out << "\n";
  }
  const Dataset ds2 = validate_dataset(table_from(out.str()), "v");
  CHECK(ds2.n() == ds.n());
  CHECK(ds2.modifier_index() == ds.modifier_index());
  CHECK(ds2.y() == ds.y());
  CHECK(ds2.z() == ds.z());
  CHECK(ds2.a() == ds.a());
  CHECK(ds2.W() == ds.W());
}

TEST_CASE("design matrix is deterministic") {
  const Dataset ds = small_dataset();
  const ModelSpec spec = main_terms_spec(ds, ModelRole::OutcomeMu, true, true);
  CHECK(design_matrix(ds, spec) == design_matrix(ds, spec));
}
