#include "simtrack/io.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace simtrack {
namespace {

using io::json;

EnsembleSpec sample_spec() {
  std::mt19937 rng(5);
  SystemSpec a{{1.0, std::sqrt(2.0), 2.9}, {testing::random_skew(rng, 3), testing::random_skew(rng, 3)}, 1e-7};
  SystemSpec b{{0.5, std::sqrt(3.0), 4.1}, {testing::random_skew(rng, 3)}, 0.0};
  return EnsembleSpec{{a, b}, 7.5};
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(SpecJson, RoundTripIsExact) {
  const auto spec = sample_spec();
  const auto back = io::spec_from_json(io::parse(io::dump(io::spec_to_json(spec)), "mem"));
  ASSERT_EQ(back.system_count(), 2);
  EXPECT_EQ(back.delta, spec.delta);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(back.systems[i].spectrum, spec.systems[i].spectrum);
    EXPECT_EQ(back.systems[i].truncation_tail, spec.systems[i].truncation_tail);
    ASSERT_EQ(back.systems[i].controls(), spec.systems[i].controls());
    for (int j = 0; j < spec.systems[i].controls(); ++j)
      EXPECT_EQ(back.systems[i].couplings[j], spec.systems[i].couplings[j]);
  }
}

TEST(SpecJson, RealEntriesMayBeBareNumbers) {
  const auto spec = io::spec_from_json(
      io::parse(R"({"delta": 2, "systems": [{"spectrum": [1, 3], "couplings": [[[0, 1], [-1, [0, 0]]]]}]})", "mem"));
  EXPECT_EQ(spec.systems[0].couplings[0](0, 1), Complex(1.0, 0.0));
  EXPECT_EQ(spec.systems[0].truncation_tail, 0.0);
}

TEST(SpecJson, FieldErrorsNameThePath) {
  const std::string msg = error_of([] {
    io::spec_from_json(io::parse(R"({"delta": 2, "systems": [{"spectrum": [1, 3], "couplings": [[[0, 1], [-1, "x"]]]}]})",
                                 "mem"));
  });
  EXPECT_NE(msg.find("spec.systems[0].couplings[0][1][1]"), std::string::npos) << msg;
  EXPECT_NE(error_of([] { io::spec_from_json(json::object()); }).find("missing field 'delta'"), std::string::npos);
}

TEST(Parse, SyntaxErrorReportsLine) {
  const std::string text = "{\n  \"delta\": 1,\n  \"systems\": [,]\n}\n";
  const std::string msg = error_of([&] { io::parse(text, "spec.json"); });
  EXPECT_NE(msg.find("spec.json:3:"), std::string::npos) << msg;
}

TEST(ControlJson, RoundTripKeepsInfiniteDelta) {
  PiecewiseConstantControl c{ControlDomain::kV, std::numeric_limits<double>::infinity(), {0.1, 2.0 / 3.0}, {1.0, 1e9}};
  const json j = io::control_to_json(c);
  EXPECT_TRUE(j["delta"].is_null());
  const auto back = io::control_from_json(io::parse(io::dump(j), "mem"));
  EXPECT_EQ(back.domain, ControlDomain::kV);
  EXPECT_TRUE(std::isinf(back.delta));
  EXPECT_EQ(back.durations, c.durations);
  EXPECT_EQ(back.values, c.values);
}

TEST(ControlJson, RejectsValuesOutsideTheDomain) {
  EXPECT_THROW(io::control_from_json(io::parse(R"({"domain": "u", "delta": 1, "segments": [[1, 2]]})", "mem")),
               StructuralError);
  EXPECT_THROW(io::control_from_json(io::parse(R"({"domain": "w", "segments": []})", "mem")), StructuralError);
}

TEST(TargetJson, RoundTripUsesOneBasedBlocks) {
  std::mt19937 rng(8);
  TargetCurve t;
  t.times = {0.0, 0.5, 1.25};
  t.blocks = {{0, 0}, {1, 2}};
  t.frames.resize(2);
  for (auto& per : t.frames)
    for (int s = 0; s < 3; ++s) per.push_back(testing::random_unitary(rng, 3).leftCols(2));
  const json j = io::target_to_json(t);
  EXPECT_EQ(j["frames"][1]["system"], 2);
  EXPECT_EQ(j["frames"][1]["control"], 3);
  const auto back = io::target_from_json(io::parse(io::dump(j), "mem"));
  EXPECT_EQ(back.times, t.times);
  EXPECT_EQ(back.blocks, t.blocks);
  for (int b = 0; b < 2; ++b)
    for (int s = 0; s < 3; ++s) EXPECT_EQ(back.frames[b][s], t.frames[b][s]);
}

TEST(TargetJson, SampleCountMustMatchTimes) {
  const std::string msg = error_of([] {
    io::target_from_json(
        io::parse(R"({"times": [0, 1], "frames": [{"system": 1, "control": 1, "samples": [[[1]]]}]})", "mem"));
  });
  EXPECT_NE(msg.find("target.frames[0].samples"), std::string::npos) << msg;
}

TEST(TrajectoryCsv, ParsesBackToTheSampledModuliAndPhases) {
  std::mt19937 rng(2);
  const auto model = testing::single_block_model({1.0, 2.2, 3.1}, testing::random_skew(rng, 3));
  const PiecewiseConstantControl u{ControlDomain::kU, 5.0, {0.3, 0.4}, {1.0, 0.2}};
  const auto traj = propagate(model, u, identity_states(model, 2));
  const auto table = io::parse_csv(io::trajectory_csv(traj));
  ASSERT_EQ(table.header.size(), 1u + 2 * 3 * 2);
  EXPECT_EQ(table.header[0], "time");
  EXPECT_EQ(table.header[1], "mod_s1c1_col1_lvl1");
  EXPECT_EQ(table.header[4], "arg_s1c1_col1_lvl2");
  ASSERT_EQ(static_cast<int>(table.rows.size()), traj.sample_count());
  for (int s = 0; s < traj.sample_count(); ++s) {
    EXPECT_EQ(table.rows[s][0], traj.times[s]);
    const CMatrix& x = traj.states[s][0];
    EXPECT_EQ(table.rows[s][1 + 2 * (3 * 1 + 2)], std::abs(x(2, 1)));
    EXPECT_EQ(table.rows[s][2 + 2 * (3 * 1 + 2)], std::arg(x(2, 1)));
  }
}

TEST(TrajectoryCsv, BadCellsNameTheLine) {
  const std::string msg = error_of([] { io::parse_csv("time,a\n0,1\n1,zz\n"); });
  EXPECT_NE(msg.find("csv line 3"), std::string::npos) << msg;
}

TEST(CounterexampleJson, ParsesAsJsonWithNullsForMissingExits) {
  CounterexampleReport r;
  r.eps = 0.2;
  const json j = io::parse(io::dump(io::counterexample_to_json(r)), "mem");
  EXPECT_TRUE(j["exit_time"].is_null());
  EXPECT_EQ(j["checks"].size(), 4u);
}

}  // namespace
}  // namespace simtrack
