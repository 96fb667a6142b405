#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <sensmpc/road.hpp>

using namespace sensmpc;
using namespace sensmpc::road;

namespace {

constexpr double kPi = std::numbers::pi;

MeasurementStream stream_of(const std::function<double(double)> & f, double t0, int n)
{
  MeasurementStream s;
  s.t0 = t0;
  for (int i = 0; i < n; ++i) { s.heights.push_back(f(s.time(static_cast<std::size_t>(i)))); }
  return s;
}

std::filesystem::path temp_file(const std::string & name, const std::string & text)
{
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(Profile, FlatIsZero)
{
  const RoadProfile p = generate_profile(Flat{});
  for (double t : {-3.0, 0.0, 0.7, 12.0}) {
    EXPECT_EQ(p.height(t), 0.0);
    EXPECT_EQ(p.rate(t), 0.0);
  }
}

TEST(Profile, SineQuarterPeriod)
{
  const RoadProfile p = generate_profile(Sine{0.01, 1.0, 0.0});
  EXPECT_NEAR(p.height(0.25), 0.01, 1e-15);
  EXPECT_NEAR(p.height(0.0), 0.0, 1e-15);
  EXPECT_NEAR(p.rate(0.0), 0.02 * kPi, 1e-15);
  EXPECT_NEAR(p.rate(0.25), 0.0, 1e-15);
}

TEST(Profile, FilteredRandomIsSeeded)
{
  const RoadProfile a = generate_profile(FilteredRandom{7});
  const RoadProfile b = generate_profile(FilteredRandom{7});
  const RoadProfile c = generate_profile(FilteredRandom{8});
  EXPECT_GE(a.components().size(), 50u);
  for (double t : {0.0, 0.31, 2.5}) {
    EXPECT_EQ(a.height(t), b.height(t));
    EXPECT_EQ(a.rate(t), b.rate(t));
  }
  EXPECT_NE(a.height(0.31), c.height(0.31));
  FilteredRandom few{7};
  few.components = 49;
  EXPECT_THROW(generate_profile(few), ConfigError);
}

TEST(Profile, SampledInterpolatesKnotsAndSlopes)
{
  Sampled s;
  s.t0 = 1.0;
  for (int i = 0; i < 20; ++i) { s.heights.push_back(0.5 * i * kSamplePeriod); }
  const RoadProfile p = generate_profile(s);
  for (int i = 0; i < 20; ++i) { EXPECT_NEAR(p.height(1.0 + i * kSamplePeriod), s.heights[static_cast<std::size_t>(i)], 1e-15); }
  EXPECT_NEAR(p.height(1.0 + 7.5 * kSamplePeriod), 0.5 * 7.5 * kSamplePeriod, 1e-15);
  EXPECT_NEAR(p.rate(1.0 + 7.3 * kSamplePeriod), 0.5, 1e-9);
}

TEST(Measurements, NoiseFreeSamplesAreExact)
{
  const RoadProfile p = generate_profile(Sine{0.01, 2.0, 0.3});
  const MeasurementStream m = sample_measurements(p, 0.5, 1.0, 0.0, 1);
  ASSERT_EQ(m.size(), 501u);
  for (std::size_t i = 0; i < m.size(); ++i) { EXPECT_EQ(m.heights[i], p.height(m.time(i))); }
}

TEST(Measurements, NoiseIsBoundedAndCentred)
{
  const double a = 0.025;
  const MeasurementStream m = sample_measurements(generate_profile(Flat{}), 0.0, 199.998, a, 5);
  ASSERT_EQ(m.size(), 100000u);
  double sum = 0.0;
  for (double h : m.heights) {
    EXPECT_LE(std::abs(h), a);
    sum += h;
  }
  const double sigma = a / std::sqrt(3.0);
  EXPECT_LE(std::abs(sum / m.size()), 3 * sigma / std::sqrt(m.size()));
}

TEST(Preview, ConstantStream)
{
  const PreviewModel pm = fit_preview(stream_of([](double) { return 0.03; }, 0.0, 600), 1.0, 10);
  EXPECT_NEAR(pm.mean(), 0.03, 1e-15);
  for (double t : {0.3, 1.1, 4.0}) {
    EXPECT_NEAR(pm.height(t), 0.03, 1e-15);
    EXPECT_NEAR(pm.rate(t), 0.0, 1e-12);
  }
  EXPECT_NEAR(pm.window_start(), 0.2, 1e-12);
  EXPECT_NEAR(pm.window_length(), 1.0, 1e-12);
}

TEST(Preview, ExactBinSinusoidIsReproducedBeyondTheWindow)
{
  auto f = [](double t) { return 0.01 * std::sin(2 * kPi * 3.0 * t + 0.4); };
  const PreviewModel pm = fit_preview(stream_of(f, 0.0, 500), 1.0, 10);
  for (double t = 0.0; t < 3.0; t += 0.0137) { EXPECT_NEAR(pm.height(t), f(t), 1e-9) << t; }
  ASSERT_FALSE(pm.modes().empty());
  EXPECT_EQ(pm.modes().front().bin, 3);
}

TEST(Preview, OffBinSinusoidLeaks)
{
  auto f = [](double t) { return 0.01 * std::sin(2 * kPi * 3.3 * t); };
  const PreviewModel pm = fit_preview(stream_of(f, 0.0, 500), 1.0, 10);
  double inside = 0.0, outside = 0.0;
  for (int i = 0; i < 500; ++i) { inside = std::max(inside, std::abs(pm.height(i * kSamplePeriod) - f(i * kSamplePeriod))); }
  for (int i = 500; i < 1000; ++i) { outside = std::max(outside, std::abs(pm.height(i * kSamplePeriod) - f(i * kSamplePeriod))); }
  EXPECT_GT(inside, 1e-6);
  EXPECT_LT(inside, 0.01);
  EXPECT_GT(outside, inside);
}

TEST(Preview, AllModesReconstructTheWindow)
{
  auto f = [](double t) { return 0.01 * std::sin(2 * kPi * 3.3 * t) + 0.004 * std::cos(2 * kPi * 17.1 * t) + 0.002; };
  const MeasurementStream s = stream_of(f, 0.0, 500);
  const PreviewModel pm = fit_preview(s, 1.0, 1000);
  for (std::size_t i = 0; i < s.size(); ++i) { EXPECT_NEAR(pm.height(s.time(i)), s.heights[i], 1e-10); }
}

TEST(Preview, RateMatchesCentralDifferences)
{
  auto f = [](double t) { return 0.01 * std::sin(2 * kPi * 1.3 * t) + 0.003 * std::sin(2 * kPi * 4.1 * t + 1.0); };
  const PreviewModel pm = fit_preview(stream_of(f, 0.0, 500), 1.0, 12);
  const double h = 1e-6;
  for (double t : {0.1, 0.77, 1.4}) {
    const double fd = (pm.height(t + h) - pm.height(t - h)) / (2 * h);
    EXPECT_NEAR(pm.rate(t), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Preview, ShortWindowIsRejected)
{
  const MeasurementStream s = stream_of([](double) { return 0.0; }, 0.0, 10);
  EXPECT_THROW(fit_preview(s, 0.002, 4), ContractError);
  EXPECT_THROW(fit_preview(s, 1.0, 4), ContractError);
}

TEST(Preview, FittingRemovesMostNoise)
{
  const RoadProfile p = generate_profile(Sine{0.01, 3.0, 0.0});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MeasurementStream m = sample_measurements(p, 0.0, 0.998, 0.025, seed);
    const PreviewModel pm = fit_preview(m, 1.0, 10);
    double raw = 0.0, fitted = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double truth = p.height(m.time(i));
      raw += std::pow(m.heights[i] - truth, 2);
      fitted += std::pow(pm.height(m.time(i)) - truth, 2);
    }
    EXPECT_LT(fitted, raw) << "seed " << seed;
  }
}

TEST(DelayedRear, ZeroDelayIsIdentity)
{
  const RoadProfile p = generate_profile(Sine{0.01, 1.5, 0.2});
  const auto rear = delayed_rear(p, 0.0);
  for (double t : {0.0, 0.4, 2.2}) {
    EXPECT_EQ(rear.height(t), p.height(t));
    EXPECT_EQ(rear.rate(t), p.rate(t));
  }
}

TEST(DelayedRear, HalfPeriodDelayNegates)
{
  const RoadProfile p = generate_profile(Sine{0.01, 1.0, 0.0});
  const auto rear = delayed_rear(p, 0.5);
  for (double t : {0.6, 0.83, 2.1}) {
    EXPECT_NEAR(rear.height(t), -p.height(t), 1e-12);
    EXPECT_NEAR(rear.rate(t), -p.rate(t), 1e-12);
  }
}

TEST(DelayedRear, ClampsBeforeTheEarliestSample)
{
  const RoadProfile p = generate_profile(Sine{0.01, 1.0, 0.0});
  const auto rear = delayed_rear(p, 0.2, 1.0);
  EXPECT_TRUE(rear.clamped(1.1));
  EXPECT_FALSE(rear.clamped(1.3));
  EXPECT_EQ(rear.height(1.1), p.height(1.0));
  EXPECT_EQ(rear.rate(1.1), 0.0);
  EXPECT_THROW(delayed_rear(p, -0.1), ContractError);
}

TEST(PreviewChannel, NoiseFreeObservationAndForecast)
{
  const RoadProfile p = generate_profile(Sine{0.01, 2.0, 0.0});
  RoadPreviewChannel ch(p, 0.2);
  std::mt19937_64 rng(1);
  const Vec y = ch.observe(3.0, 0.0, rng);
  EXPECT_NEAR(y[0], p.height(3.0), 1e-15);
  EXPECT_NEAR(y[1], p.height(2.8), 1e-15);
  const DisturbanceSequence seq = ch.forecast(3.0, 0.1, 6);
  ASSERT_EQ(seq.size(), 6u);
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const double t = 3.0 + 0.1 * k;
    EXPECT_NEAR(seq.samples[k][0], p.height(t), 1e-9);
    EXPECT_NEAR(seq.samples[k][1], p.height(t - 0.2), 1e-9);
    EXPECT_NEAR(seq.samples[k][2], p.rate(t), 1e-7);
  }
  Vec d;
  ch.truth(3.05, d);
  EXPECT_NEAR(d[1], p.height(2.85), 1e-15);
}

TEST(ReadSamples, ParsesCommentsAndSpacing)
{
  const auto path = temp_file("sensmpc_road_ok.txt", "# t h\n0.0 0.001\n\n0.002 0.002\n0.004 0.0015\n");
  const Sampled s = read_samples(path.string());
  ASSERT_EQ(s.heights.size(), 3u);
  EXPECT_EQ(s.t0, 0.0);
  EXPECT_EQ(s.heights[2], 0.0015);
  std::filesystem::remove(path);
}

TEST(ReadSamples, ReportsTheOffendingLine)
{
  const auto spacing = temp_file("sensmpc_road_gap.txt", "0.0 0\n0.002 0\n0.005 0\n");
  try {
    read_samples(spacing.string());
    FAIL();
  } catch (const ParseError & e) {
    EXPECT_EQ(e.line, 3u);
  }
  const auto junk = temp_file("sensmpc_road_junk.txt", "0.0 0\nabc\n");
  try {
    read_samples(junk.string());
    FAIL();
  } catch (const ParseError & e) {
    EXPECT_EQ(e.line, 2u);
  }
  EXPECT_THROW(read_samples("/nonexistent/road.txt"), ConfigError);
  std::filesystem::remove(spacing);
  std::filesystem::remove(junk);
}
