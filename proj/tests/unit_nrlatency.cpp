#include <doctest.h>

#include "beamsight/nrlatency.hpp"

using namespace beamsight;
using namespace beamsight::nrlatency;

TEST_SUITE_BEGIN("nrlatency");

TEST_CASE("timing config invariant") {
  NrTimingConfig cfg;
  CHECK(cfg.t_block_ms() == doctest::Approx(0.15625).epsilon(1e-15));
  CHECK(cfg.t_block_ms() * static_cast<double>(cfg.blocks_per_burst) ==
        doctest::Approx(cfg.t_bs_ms));
  NrTimingConfig bad;
  bad.t_bs_ms = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("exhaustive sweep time") {
  NrTimingConfig cfg;
  CHECK(sweep_time_exhaustive(32, cfg) == doctest::Approx(5.0));
  CHECK(sweep_time_exhaustive(64, cfg) == doctest::Approx(25.0));
  CHECK(sweep_time_exhaustive(33, cfg) == doctest::Approx(25.0));
  CHECK(sweep_time_exhaustive(1, cfg) == doctest::Approx(5.0));
  CHECK_THROWS_AS(sweep_time_exhaustive(0, cfg), ConfigError);
}

TEST_CASE("top-k sweep time") {
  NrTimingConfig cfg;
  CHECK(sweep_time_topk(1, cfg) == doctest::Approx(0.15625));
  CHECK(sweep_time_topk(15, cfg) == doctest::Approx(2.34375));
  CHECK(sweep_time_topk(32, cfg) == doctest::Approx(5.0));
  CHECK(sweep_time_topk(33, cfg) == doctest::Approx(20.15625));
  CHECK_THROWS_AS(sweep_time_topk(0, cfg), ConfigError);
}

TEST_CASE("end-to-end latency") {
  NrTimingConfig cfg;
  CHECK(end_to_end_latency(15, cfg) == doctest::Approx(3.44375));
  CHECK(end_to_end_latency(1, cfg) == doctest::Approx(1.25625));
  NrTimingConfig no_inf = cfg;
  no_inf.t_inf_ms = 0.0;
  CHECK(end_to_end_latency(15, no_inf) == doctest::Approx(2.44375));
}

TEST_CASE("sweep-time monotonicity and exhaustive bound") {
  NrTimingConfig cfg;
  double prev_topk = 0.0, prev_ex = 0.0;
  for (std::size_t k = 1; k <= 130; ++k) {
    const double tk = sweep_time_topk(k, cfg);
    const double ex = sweep_time_exhaustive(k, cfg);
    CHECK(tk <= ex + 1e-12);
    CHECK(tk >= prev_topk - 1e-12);
    CHECK(ex >= prev_ex - 1e-12);
    // gap at the burst boundary: t_bs - t_ssb * (1 + (K-1) mod 32)
    const double gap =
        cfg.t_bs_ms - cfg.t_block_ms() * (1.0 + static_cast<double>((k - 1) % 32));
    CHECK(ex - tk == doctest::Approx(gap).epsilon(1e-12));
    prev_topk = tk;
    prev_ex = ex;
  }
}

TEST_CASE("overhead report reproduces the reference percentages") {
  NrTimingConfig cfg;
  auto rep = overhead_report(64, {1, 5, 9, 11, 15}, cfg, 26.1);
  CHECK(rep.sweep_exhaustive_ms == doctest::Approx(25.0));
  const auto& r15 = rep.rows.back();
  CHECK(r15.k == 15);
  CHECK(r15.sweep_topk_ms == doctest::Approx(2.34375));
  CHECK(r15.total_ms == doctest::Approx(3.44375));
  CHECK(r15.latency_reduction_pct == doctest::Approx(86.81).epsilon(0.0006));
  CHECK(r15.search_fraction_pct == doctest::Approx(23.4375));
  CHECK(r15.search_reduction_pct == doctest::Approx(76.5625));

  auto full = overhead_report(64, {64}, cfg, 26.1);
  CHECK(full.rows[0].search_reduction_pct == doctest::Approx(0.0));

  CHECK_THROWS_AS(overhead_report(64, {65}, cfg, 26.1), ConfigError);
}

TEST_CASE("report csv/json agree") {
  NrTimingConfig cfg;
  auto rep = overhead_report(64, {1, 15}, cfg, 26.1);
  auto j = report_json(rep);
  const std::string csv = report_csv(rep);
  CHECK(j["rows"].size() == 2);
  CHECK(j["rows"][1]["total_ms"].get<double>() == doctest::Approx(rep.rows[1].total_ms));
  CHECK(csv.find("k,T_sp_mm_ms,total_ms,latency_reduction_pct,search_fraction_pct") == 0);
  CHECK(csv.find("15,") != std::string::npos);
}

TEST_SUITE_END();
