#include "dlmc/config.hpp"
#include "dlmc/io.hpp"
#include "dlmc/reference.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace dlmc;
using dlmc::test::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  ExperimentConfig c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(config_to_json(c).size(), config_keys().size());
}

TEST(Config, KeyValueText) {
  const ExperimentConfig c = parse_config_text(
      "# comment\n"
      "target = rosenbrock\n"
      "dim = 32   # trailing comment\n"
      "step_size = 0.02\n"
      "stop_on_convergence = false\n"
      "funnel_sigma = inf\n"
      "seed = 42\n");
  EXPECT_EQ(c.target, "rosenbrock");
  EXPECT_EQ(c.dim, 32);
  EXPECT_DOUBLE_EQ(c.step_size, 0.02);
  EXPECT_FALSE(c.stop_on_convergence);
  EXPECT_TRUE(std::isinf(c.funnel_sigma));
  EXPECT_EQ(c.seed, 42u);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.target = "gaussian_mixture";
  c.dim = 10;
  c.step_size = 0.0123456789012345;
  c.funnel_sigma = 5.0;
  c.latent_space = false;
  c.output_dir = "somewhere/else";
  const ExperimentConfig r = parse_config_text(config_to_json(c).dump());
  EXPECT_EQ(r, c);
}

TEST(Config, InfiniteSigmaRoundTrips) {
  const ExperimentConfig c;
  EXPECT_EQ(parse_config_text(config_to_json(c).dump()), c);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config_text("dim = 3\ndim = 4\n"), ConfigError);
  EXPECT_THROW(parse_config_text("{\"dim\": 3, \"dim\": 4}"), ConfigError);
  EXPECT_THROW(parse_config_text("no_such_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("dim = three\n"), ConfigError);
  EXPECT_THROW(parse_config_text("dim 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("method = hmc\n"), ConfigError);
  EXPECT_THROW(parse_config_text("target = banana\n"), ConfigError);
  EXPECT_THROW(parse_config_text("optimizer = adam\n"), ConfigError);
  EXPECT_THROW(parse_config_text("latent_space = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("{\"dim\": [1, 2]}"), ConfigError);
  EXPECT_THROW(parse_config_text("{\"dim\": 3"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.txt"), ConfigError);
}

TEST(GermanCredit, ShippedFile) {
  const CreditData d = load_german_credit(dlmc::test::source_path("data/german.data-numeric").string());
  EXPECT_EQ(d.features.rows(), 1000);
  EXPECT_EQ(d.features.cols(), 24);
  EXPECT_EQ(d.labels.sum(), 300.0);
  for (int j = 0; j < 24; ++j) {
    EXPECT_NEAR(d.features.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(d.features.col(j).squaredNorm() / 1000, 1.0, 1e-9);
  }
}

TEST(GermanCredit, MalformedFiles) {
  TempDir dir("german");
  const auto p = dir.path / "g.txt";
  write_text(p, "1 2 3\n");
  EXPECT_THROW(load_german_credit(p.string(), 1), DataError);
  std::string row;
  for (int j = 0; j < 24; ++j) row += "1 ";
  write_text(p, row + "3\n");
  EXPECT_THROW(load_german_credit(p.string(), 1), DataError);
  write_text(p, row + "x\n");
  EXPECT_THROW(load_german_credit(p.string(), 1), DataError);
  write_text(p, row + "1\n" + row + "2\n");
  EXPECT_THROW(load_german_credit(p.string(), 1), DataError);
  EXPECT_NO_THROW(load_german_credit(p.string(), 2));
  EXPECT_THROW(load_german_credit((dir.path / "missing").string()), DataError);
}

TEST(ReferenceFile, RoundTrip) {
  ReferenceMoments r = rosenbrock_reference({4, 0.1, 6.0}, 400);
  r.notes = "test";
  TempDir dir("ref");
  const auto p = dir.path / "ref.json";
  save_reference(r, p);
  const ReferenceMoments q = load_reference(p);
  EXPECT_EQ(q.target, r.target);
  EXPECT_EQ(q.provenance, r.provenance);
  EXPECT_EQ(q.grid_resolution, r.grid_resolution);
  EXPECT_EQ(q.second_moment, r.second_moment);
  EXPECT_EQ(q.mean, r.mean);
  EXPECT_EQ(q.notes, "test");
}

TEST(ReferenceFile, Validation) {
  nlohmann::json j = reference_to_json(gaussian_reference(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()));
  j["mean"] = {1.0};
  EXPECT_THROW(reference_from_json(j), DataError);
  j = reference_to_json(gaussian_reference(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()));
  j["provenance"] = "quadrature-oracle";
  EXPECT_THROW(reference_from_json(j), DataError);
  j.erase("target");
  EXPECT_THROW(reference_from_json(j), DataError);
}

TEST(Files, AtomicWriteReplaces) {
  TempDir dir("atomic");
  const auto p = dir.path / "out.txt";
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  EXPECT_EQ(s, "second");
  EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
  EXPECT_THROW(write_file_atomic(dir.path / "missing" / "x.txt", "x"), std::runtime_error);
}

TEST(Files, RealJsonHandlesNonFinite) {
  EXPECT_TRUE(std::isinf(detail::real_from_json(detail::real_json(std::numeric_limits<double>::infinity()))));
  EXPECT_TRUE(std::isnan(detail::real_from_json(detail::real_json(std::nan("")))));
  EXPECT_DOUBLE_EQ(detail::real_from_json(detail::real_json(0.25)), 0.25);
  EXPECT_THROW(detail::real_from_json(nlohmann::json::array()), DataError);
}
