#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "selinf/datagen.hpp"

using namespace selinf;

TEST_CASE("exactly seven toy correlation designs, all with working Cholesky") {
  CHECK(toy_correlation_ids().size() == 7);
  for (const auto& id : toy_correlation_ids()) {
    const auto d = build_toy_correlation(id);
    REQUIRE(d.sigma.rows() == 4);
    CHECK((d.sigma - d.sigma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    for (int j = 0; j < 4; ++j) CHECK(d.sigma(j, j) == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::LLT<Eigen::MatrixXd> llt(d.sigma);
    CHECK(llt.info() == Eigen::Success);
  }
  CHECK_THROWS_AS(build_toy_correlation("bogus"), config_error);
}

TEST_CASE("feasible toy designs carry their exact entries") {
  CHECK((build_toy_correlation("uncorrelated").sigma - Eigen::MatrixXd::Identity(4, 4))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  const auto corr = build_toy_correlation("correlated").sigma;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(corr(i, j) == doctest::Approx(i == j ? 1.0 : 0.8));

  const auto b22 = build_toy_correlation("blocks_2_2_neg").sigma;
  CHECK(b22(0, 1) == doctest::Approx(0.8));
  CHECK(b22(2, 3) == doctest::Approx(-0.8));
  CHECK(b22(0, 2) == doctest::Approx(0.0));
  CHECK(b22(1, 3) == doctest::Approx(0.0));

  const auto b13 = build_toy_correlation("blocks_1_3").sigma;
  CHECK(b13(0, 1) == doctest::Approx(0.0));
  CHECK(b13(1, 2) == doctest::Approx(0.8));
  CHECK(b13(2, 3) == doctest::Approx(0.8));
}

TEST_CASE("infeasible negative designs land on the nearest PD projection") {
  // constant -0.8 on four variables has eigenvalue 1 - 2.4 < 0; the PD
  // projection with unit diagonal has constant off-diagonals near -1/3
  const auto cn = build_toy_correlation("correlated_neg").sigma;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      CHECK(cn(i, j) == doctest::Approx(-1.0 / 3.0).epsilon(2e-3));

  // one 3x3 block of -0.8: projection gives -1/2 inside the block
  const auto bn = build_toy_correlation("blocks_1_3_neg").sigma;
  for (int i = 1; i < 4; ++i) CHECK(std::abs(bn(0, i)) < 1e-9);
  for (int i = 1; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) CHECK(bn(i, j) == doctest::Approx(-0.5).epsilon(2e-3));
}

TEST_CASE("realistic design has 15 latents, 17 outputs and tracks the stated pairs") {
  const auto [design, pipeline] = build_realistic_design();
  REQUIRE(design.sigma.rows() == 15);
  CHECK(pipeline.output_dim() == 17);
  // the printed matrix has negative eigenvalues; the shipped design is its
  // PD projection with unit diagonal
  Eigen::LLT<Eigen::MatrixXd> llt(design.sigma);
  CHECK(llt.info() == Eigen::Success);
  for (int j = 0; j < 15; ++j) CHECK(design.sigma(j, j) == doctest::Approx(1.0).epsilon(1e-10));

  const struct { int i, j; double r; } pairs[] = {
      {0, 1, 0.8},  {0, 8, 0.5},  {2, 4, 0.5},   {2, 8, -0.8}, {3, 5, -0.8}, {3, 6, -0.5},
      {4, 5, -0.5}, {4, 11, 0.8}, {5, 6, 0.8},   {5, 10, 0.8}, {5, 13, 0.5}, {6, 10, 0.5},
      {6, 13, 0.5}, {7, 8, -0.5}, {7, 10, 0.5},  {10, 13, 0.8}};
  bool specified[15][15] = {};
  for (const auto& p : pairs) {
    specified[p.i][p.j] = specified[p.j][p.i] = true;
    CHECK(std::abs(design.sigma(p.i, p.j) - p.r) < 0.2);
    CHECK(design.sigma(p.i, p.j) * p.r > 0.0);  // sign survives the projection
  }
  for (int i = 0; i < 15; ++i)
    for (int j = i + 1; j < 15; ++j)
      if (!specified[i][j]) CHECK(std::abs(design.sigma(i, j)) < 0.08);
}

TEST_CASE("realistic column transforms match their definitions at pinned points") {
  const auto [design, pipeline] = build_realistic_design();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(15);
  CHECK(pipeline.column_transforms[0](z) == 55.0);   // floor(10*0 + 55)
  CHECK(pipeline.column_transforms[3](z) == 1.0);    // 0 >= -1.2
  CHECK(pipeline.column_transforms[4](z) == 0.0);    // 0 >= 0.75 is false
  CHECK(pipeline.column_transforms[5](z) == doctest::Approx(std::exp(1.5)));
  CHECK(pipeline.column_transforms[6](z) == 80.0);   // floor(max(0, 100 - 20))
  CHECK(pipeline.column_transforms[11](z) == 16.0);  // 0.01 * floor(100 * 16)
  z[1] = 0.7;
  CHECK(pipeline.column_transforms[1](z) == 0.0);  // 0.7 < 0.6 is false
  z[8] = 1.0;
  CHECK(pipeline.column_transforms[9](z) == 1.0);  // 0.5 <= 1.0 < 1.5
  CHECK(pipeline.column_transforms[10](z) == 0.0);

  // winsorization flags: nine continuous columns use multiplier 5
  int flagged = 0;
  for (const auto& m : pipeline.truncate_multipliers)
    if (m) {
      CHECK(*m == 5.0);
      ++flagged;
    }
  CHECK(flagged == 9);
}

TEST_CASE("toy coefficient structures are the published vectors") {
  CHECK(coefficient_ids(Setup::kToy).size() == 10);
  const auto dec = coefficient_structure(Setup::kToy, "v12_dec");
  CHECK(dec.beta[0] == 1.0);
  CHECK(dec.beta[1] == 0.1);
  CHECK(dec.beta[2] == 0.0);
  const auto all = coefficient_structure(Setup::kToy, "v1234");
  CHECK(all.beta.minCoeff() == 1.0);
  CHECK_THROWS_AS(coefficient_structure(Setup::kToy, "nope"), config_error);
}

TEST_CASE("realistic coefficient structures are distinct and cluster-consistent") {
  const auto& ids = coefficient_ids(Setup::kRealistic);
  CHECK(ids.size() == 13);
  const auto c2 = coefficient_structure(Setup::kRealistic, "c2").beta;
  CHECK(c2[1] == 1.0);
  CHECK(c2[3] == 1.0);
  CHECK(c2[13] == 1.0);
  CHECK(c2.cwiseAbs().sum() == 3.0);

  const auto c234 = coefficient_structure(Setup::kRealistic, "c234").beta;
  CHECK(c234.cwiseAbs().sum() == 8.0);

  // negative variants modify the cluster named before "neg"
  const auto c3neg4 = coefficient_structure(Setup::kRealistic, "c3neg4").beta;
  CHECK(c3neg4[6] == -1.0);
  CHECK(c3neg4[3] == 1.0);
  const auto c34neg = coefficient_structure(Setup::kRealistic, "c34neg").beta;
  CHECK(c34neg[6] == 1.0);
  CHECK(c34neg[3] == -1.0);

  for (std::size_t a = 0; a < ids.size(); ++a)
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      const auto va = coefficient_structure(Setup::kRealistic, ids[a]).beta;
      const auto vb = coefficient_structure(Setup::kRealistic, ids[b]).beta;
      CHECK((va - vb).cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("sampled datasets are standardized with the exact target R2") {
  Scenario sc;
  sc.setup = Setup::kToy;
  sc.correlation_id = "correlated";
  sc.coefficient_id = "v12";
  sc.target_r2 = 0.5;
  sc.obs_per_variable = 10;
  CHECK(sc.n() == 40);

  Rng rng(101);
  const Dataset ds = sample_dataset(sc, rng);
  const int n = static_cast<int>(ds.x_std.rows());
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(ds.x_std.col(j).mean()) <= 1e-10);
    const double sd = std::sqrt(ds.x_std.col(j).squaredNorm() / n);
    CHECK(std::abs(sd - 1.0) <= 1e-10);
  }
  const Eigen::VectorXd eta = ds.x_std * ds.beta_true;
  const double var_eta = eta.squaredNorm() / n;
  CHECK(var_eta / (var_eta + ds.noise_sd * ds.noise_sd) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // r2 = 0.5 means noise variance equals the signal variance
  CHECK(ds.noise_sd * ds.noise_sd == doctest::Approx(var_eta).epsilon(1e-12));
  CHECK(ds.y.size() == n);
  CHECK(ds.y_valid.size() == n);
  CHECK((ds.y - ds.y_valid).norm() > 0.0);
}

TEST_CASE("realistic sampling produces n = 5 x 17 = 85 rows") {
  Scenario sc;
  sc.setup = Setup::kRealistic;
  sc.correlation_id = "realistic";
  sc.coefficient_id = "c2";
  sc.target_r2 = 0.5;
  sc.obs_per_variable = 5;
  CHECK(sc.n() == 85);
  Rng rng(303);
  const Dataset ds = sample_dataset(sc, rng);
  CHECK(ds.x_std.rows() == 85);
  CHECK(ds.x_std.cols() == 17);
}

TEST_CASE("population sigma is exact for the toy setup") {
  const auto design = build_toy_correlation("correlated");
  Rng rng(55);
  const auto sigma = population_sigma(design, toy_pipeline(), 100000, rng);
  CHECK((sigma - design.sigma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("realistic population sigma is a proper correlation matrix") {
  const auto& sigma = scenario_population_sigma(Setup::kRealistic, "realistic");
  REQUIRE(sigma.rows() == 17);
  for (int j = 0; j < 17; ++j) CHECK(sigma(j, j) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  // v7 and v8 derive from strongly correlated latents: clearly positive
  CHECK(sigma(6, 7) > 0.4);
  CHECK(sigma(6, 7) < 0.9);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  CHECK(llt.info() == Eigen::Success);
}
