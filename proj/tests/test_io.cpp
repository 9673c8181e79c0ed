#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cavitrack/io.hpp"

using namespace cavitrack;

TEST(Io, NumbersRoundTripExactly) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e10, 1e10);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(std::stod(io::format_number(v)), v);
  }
  EXPECT_EQ(io::format_number(0.5), "0.5");
  EXPECT_EQ(io::format_number(std::nan("")), "nan");
  EXPECT_EQ(io::format_number(-INFINITY), "-inf");
}

TEST(Io, CsvWriterEnforcesTheHeaderWidth) {
  std::ostringstream out;
  io::CsvWriter w(out, {"a", "b"});
  w.row(std::vector<double>{1.0, 2.5});
  EXPECT_THROW(w.row(std::vector<double>{1.0}), IoError);
  EXPECT_EQ(out.str(), "a,b\n1,2.5\n");
}

TEST(Io, ObservationsRoundTrip) {
  ObservationMatrix obs;
  obs.names = {"dx1_m", "dy1_m", "dx2_m"};
  obs.data = Eigen::MatrixXd::Random(25, 3) * 1e-4;
  std::stringstream buf;
  io::write_observations(buf, obs);
  const auto back = io::read_observations(buf);
  EXPECT_EQ(back.names, obs.names);
  EXPECT_EQ(back.data, obs.data);
}

TEST(Io, ObservationsRejectMalformedRows) {
  std::istringstream ragged("a,b\n1,2\n3\n");
  EXPECT_THROW(io::read_observations(ragged), IoError);
  std::istringstream text("a,b\n1,two\n");
  EXPECT_THROW(io::read_observations(text), IoError);
  std::istringstream empty("");
  EXPECT_THROW(io::read_observations(empty), IoError);
  std::istringstream blank_lines("a\n\n 1 \n\n");
  EXPECT_EQ(io::read_observations(blank_lines).samples(), 1);
  EXPECT_THROW(io::read_observations(std::filesystem::path("/nonexistent/obs.csv")), IoError);
}

TEST(Io, KlModelRoundTrip) {
  Eigen::VectorXd variances(5);
  variances << 3.0, 2.0, 1.0, 0.2, 0.1;
  const KLModel kl = fit_kl(generate_synthetic_observations(correlated_covariance(variances, 1),
                                                            Eigen::VectorXd::Zero(5), 200, 2),
                            0.9);
  const KLModel back = io::kl_from_json(nlohmann::json::parse(io::kl_to_json(kl).dump()));
  EXPECT_EQ(back.mean, kl.mean);
  EXPECT_EQ(back.modes, kl.modes);
  EXPECT_EQ(back.variances, kl.variances);
  EXPECT_EQ(back.full_spectrum, kl.full_spectrum);
  EXPECT_EQ(back.total_variance, kl.total_variance);

  auto broken = io::kl_to_json(kl);
  broken["variances_m2"].push_back(1.0);
  EXPECT_THROW(io::kl_from_json(broken), IoError);
  broken.erase("modes");
  EXPECT_THROW(io::kl_from_json(broken), IoError);
}

TEST(Io, GridCsvHasOneRowPerNode) {
  const auto g = build_smolyak_grid(2, 1, RuleFamily::GaussHermite);
  std::ostringstream out;
  io::write_grid(out, g);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "delta_1,delta_2,weight");
  int rows = 0;
  double wsum = 0.0;
  while (std::getline(in, line)) {
    ++rows;
    wsum += std::stod(line.substr(line.rfind(',') + 1));
  }
  EXPECT_EQ(rows, g.size());
  EXPECT_NEAR(wsum, 1.0, 1e-14);
}

TEST(Io, MatrixMarketListsEveryEntryOnce) {
  SpMat a(3, 4);
  a.insert(0, 0) = 2.0;
  a.insert(2, 3) = -0.25;
  a.makeCompressed();
  std::ostringstream out;
  io::write_matrix_market(out, a);
  EXPECT_EQ(out.str(), "%%MatrixMarket matrix coordinate real general\n3 4 2\n1 1 2\n3 4 -0.25\n");
}
