#include "lgcps/config.hpp"

#include "doctest.h"
#include "test_util.hpp"

using namespace lgcps;

TEST_CASE("defaults are applied when keys are absent") {
  const RunConfig c = parse_config("");
  CHECK(c.types == 3);
  CHECK(c.s == 10000);
  CHECK(c.m == 100);
  CHECK(c.block_size == 100);
  CHECK(c.resolution_deg == 0.5);
  CHECK(c.cov.nu == 0.5);
  CHECK(c.cov.beta_km == 1000.0);
  CHECK_FALSE(c.use_fsa);
  CHECK_FALSE(c.has_eta());
}

TEST_CASE("a full config parses section by section") {
  const std::string text = R"cfg(
# sample run
[region]
lon_min = -180
lon_max = -100.25
lat_min = -15.25
lat_max = 15.25
resolution_deg = 0.5

[model]
types = 3
s = 10000
seed = 42
use_fsa = true
m = 100
block_size = 100
beta_km = 1465.57
sigma2 = [1, 2, 0.5]
rho = [[1, 0.95, -0.11], [0.95, 1, 0.18], [-0.11, 0.18, 1]]
eta = [[-1, 1.15], [-1.2, 0.9], [-2, 0.4]]

[fit]
tol = 1e-5
max_iters = 500
fix = [beta=1465.57, sigma2_2=1]

[profile]
parameter = beta
values = [300, 600, 1200, 2400]

[inputs]
rain = rain.csv
rain_columns = [str, dc, sc]

[output]
dir = run1
)cfg";
  const RunConfig c = parse_config(text);
  CHECK(c.region.lon_min == -180.0);
  CHECK(c.region.lon_max == -100.25);
  CHECK(c.seed == 42);
  CHECK(c.use_fsa);
  CHECK(c.cov.beta_km == 1465.57);
  CHECK(c.cov.sigma2(1) == 2.0);
  CHECK(c.cov.rho(0, 1) == 0.95);
  CHECK(c.cov.rho(2, 0) == -0.11);
  REQUIRE(c.has_eta());
  CHECK(c.eta(0, 1) == 1.15);
  CHECK(c.nm_tol == 1e-5);
  REQUIRE(c.fixed.size() == 2);
  CHECK(c.fixed[0].first == "beta");
  CHECK(c.fixed[0].second == 1465.57);
  CHECK(c.profile_parameter == "beta");
  CHECK(c.profile_values.size() == 4);
  CHECK(c.inputs.at("rain") == "rain.csv");
  CHECK(c.rain_columns == std::vector<std::string>{"str", "dc", "sc"});
  CHECK(c.out_dir == "run1");
}

TEST_CASE("serialization round-trips exactly") {
  RunConfig c = parse_config("");
  c.region = Region{-180.0, -100.25, -15.25, 15.25};
  c.seed = 1234567890123ULL;
  c.cov.beta_km = 1465.5700000000002;
  c.cov.sigma2 << 1.0, 0.1 + 0.2, 3.0;
  c.cov.rho(0, 1) = c.cov.rho(1, 0) = 0.95;
  c.eta = Eigen::MatrixXd::Random(3, 2);
  c.fixed = {{"beta", 1465.57}};
  c.profile_parameter = "beta";
  c.profile_values = {300.0, 600.0};
  c.inputs["rain"] = "x.csv";

  const std::string text = serialize_config(c);
  const RunConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.cov.beta_km == c.cov.beta_km);
  CHECK(back.cov.sigma2(1) == c.cov.sigma2(1));
  CHECK(back.eta(2, 1) == c.eta(2, 1));
  CHECK(back.seed == c.seed);
}

TEST_CASE("unknown keys and malformed values are rejected by name") {
  CHECK_THROWS_WITH_AS(parse_config("[model]\nnugget = 1\n"), doctest::Contains("model.nugget"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config("[model]\ns = abc\n"), doctest::Contains("model.s"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config("[model]\nsigma2 = [1, 2]\n"), doctest::Contains("sigma2"),
                       std::runtime_error);
  CHECK_THROWS(parse_config("[model]\nrho = [[1, 0], [0]]\n"));
  CHECK_THROWS(parse_config("stray line without equals\n"));
}

TEST_CASE("validation limits catch nonsense settings") {
  CHECK_THROWS(parse_config("[model]\ns = 0\n"));
  CHECK_THROWS(parse_config("[model]\ntypes = 0\n"));
  CHECK_THROWS(parse_config("[region]\nresolution_deg = -1\n"));
}
