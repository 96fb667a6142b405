#pragma once

/**
 * @file
 * @brief Road profiles, noisy 2 ms height measurements and the Fourier preview built from them.
 */

#include <fftw3.h>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "ocp.hpp"

namespace sensmpc::road {

inline constexpr double kSamplePeriod = 0.002;

struct Flat
{};

struct Sine
{
  double amplitude = 0.01;
  double frequency = 1.0;
  double phase = 0.0;
};

struct SumOfSines
{
  std::vector<Sine> terms;
};

/// Sum of random-phase sinusoids with amplitude roughness / f over [0.5 Hz, cutoff].
struct FilteredRandom
{
  std::uint64_t seed = 0;
  double roughness = 0.0025;
  double cutoff = 20.0;
  int components = 64;
};

/// Height samples at a fixed spacing, interpolated by cubic Hermite with central-difference slopes.
struct Sampled
{
  double t0 = 0.0;
  double spacing = kSamplePeriod;
  std::vector<double> heights;
};

using ProfileSpec = std::variant<Flat, Sine, SumOfSines, FilteredRandom, Sampled>;

/// A road height signal w(t) with its rate w'(t).
class RoadProfile
{
public:
  RoadProfile() = default;

  explicit RoadProfile(SumOfSines sines) : sines_(std::move(sines.terms)) {}

  explicit RoadProfile(Sampled sampled) : sampled_(std::make_shared<Sampled>(std::move(sampled))) {}

  double height(double t) const
  {
    if (sampled_) { return sampled_eval(t).first; }
    double v = 0.0;
    for (const auto & s : sines_) { v += s.amplitude * std::sin(2 * std::numbers::pi * s.frequency * t + s.phase); }
    return v;
  }

  double rate(double t) const
  {
    if (sampled_) { return sampled_eval(t).second; }
    double v = 0.0;
    for (const auto & s : sines_) {
      const double om = 2 * std::numbers::pi * s.frequency;
      v += s.amplitude * om * std::cos(om * t + s.phase);
    }
    return v;
  }

  const std::vector<Sine> & components() const { return sines_; }

private:
  std::pair<double, double> sampled_eval(double t) const
  {
    const auto & s = *sampled_;
    const auto n = static_cast<long>(s.heights.size());
    if (n == 1) { return {s.heights[0], 0.0}; }
    const double pos = (t - s.t0) / s.spacing;
    if (pos <= 0) { return {s.heights.front(), 0.0}; }
    if (pos >= n - 1) { return {s.heights.back(), 0.0}; }
    const long i = static_cast<long>(std::floor(pos));
    const double tau = pos - i;
    auto h = [&](long k) { return s.heights[static_cast<std::size_t>(std::clamp(k, 0L, n - 1))]; };
    auto slope = [&](long k) { return (h(k + 1) - h(k - 1)) / (k == 0 || k == n - 1 ? 1.0 : 2.0); };
    const double y0 = h(i), y1 = h(i + 1), m0 = slope(i), m1 = slope(i + 1);
    const double t2 = tau * tau, t3 = t2 * tau;
    const double val = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + tau) * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1;
    const double der = (6 * t2 - 6 * tau) * y0 + (3 * t2 - 4 * tau + 1) * m0 + (-6 * t2 + 6 * tau) * y1 + (3 * t2 - 2 * tau) * m1;
    return {val, der / s.spacing};
  }

  std::vector<Sine> sines_;
  std::shared_ptr<const Sampled> sampled_;
};

inline RoadProfile generate_profile(const ProfileSpec & spec)
{
  return std::visit(
    [](const auto & s) -> RoadProfile {
      using T = std::decay_t<decltype(s)>;
      if constexpr (std::is_same_v<T, Flat>) {
        return RoadProfile();
      } else if constexpr (std::is_same_v<T, Sine>) {
        if (!std::isfinite(s.amplitude) || !(s.frequency >= 0.0)) { throw ConfigError("road: invalid sine"); }
        return RoadProfile(SumOfSines{{s}});
      } else if constexpr (std::is_same_v<T, SumOfSines>) {
        for (const auto & t : s.terms) {
          if (!std::isfinite(t.amplitude) || !(t.frequency >= 0.0)) { throw ConfigError("road: invalid sine term"); }
        }
        return RoadProfile(s);
      } else if constexpr (std::is_same_v<T, FilteredRandom>) {
        if (s.components < 50) { throw ConfigError("road: filtered-random needs at least 50 components"); }
        if (!(s.cutoff > 0.5) || !(s.roughness >= 0.0)) { throw ConfigError("road: invalid filtered-random spec"); }
        std::mt19937_64 rng(s.seed);
        std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
        SumOfSines out;
        const double lo = std::log(0.5), hi = std::log(s.cutoff);
        for (int i = 0; i < s.components; ++i) {
          const double f = std::exp(lo + (hi - lo) * i / (s.components - 1));
          out.terms.push_back({s.roughness / f, f, phase(rng)});
        }
        return RoadProfile(out);
      } else {
        if (s.heights.empty() || !(s.spacing > 0.0)) { throw ConfigError("road: empty sampled profile"); }
        return RoadProfile(s);
      }
    },
    spec);
}

/**
 * @brief Reads a two-column (time, height) text file with fixed 2 ms spacing.
 *
 * Blank lines and lines starting with '#' are ignored.
 */
inline Sampled read_samples(const std::string & path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("road: cannot open " + path); }
  Sampled s;
  std::string line;
  std::size_t lineno = 0;
  double prev_t = 0.0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') { continue; }
    std::istringstream ls(line);
    double t, h;
    if (!(ls >> t >> h)) { throw ParseError("road file " + path + ": malformed line " + std::to_string(lineno), lineno); }
    if (s.heights.empty()) {
      s.t0 = t;
    } else if (std::abs((t - prev_t) - kSamplePeriod) > 1e-9) {
      throw ParseError("road file " + path + ": spacing is not 2 ms at line " + std::to_string(lineno), lineno);
    }
    prev_t = t;
    s.heights.push_back(h);
  }
  if (s.heights.empty()) { throw ParseError("road file " + path + ": no samples", lineno); }
  return s;
}

inline RoadProfile load_profile(const std::string & path) { return generate_profile(read_samples(path)); }

struct MeasurementStream
{
  double t0 = 0.0;
  double sample_period = kSamplePeriod;
  double noise_amplitude = 0.0;
  std::vector<double> heights;

  double time(std::size_t i) const { return t0 + static_cast<double>(i) * sample_period; }
  std::size_t size() const { return heights.size(); }
  double end_time() const { return time(heights.size() - 1); }
};

/// Samples on the 2 ms grid of [t0, t0 + duration] with i.i.d. noise uniform in [-amplitude, amplitude].
inline MeasurementStream sample_measurements(const RoadProfile & profile, double t0, double duration, double noise_amplitude, std::uint64_t seed)
{
  if (!(duration > 0.0)) { throw ContractError("sample_measurements: duration must be positive"); }
  MeasurementStream m;
  m.t0 = t0;
  m.noise_amplitude = noise_amplitude;
  const auto n = static_cast<std::size_t>(std::floor(duration / kSamplePeriod + 1e-9)) + 1;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  m.heights.reserve(n);
  for (std::size_t i = 0; i < n; ++i) { m.heights.push_back(profile.height(m.time(i)) + noise_amplitude * unit(rng)); }
  return m;
}

/**
 * @brief Fourier model of a trailing measurement window, extended periodically beyond it.
 *
 * w(t) = mean + sum_k c_k cos(2 pi k (t - t_start) / (n dt) + phi_k) over the retained bins.
 */
class PreviewModel
{
public:
  struct Mode
  {
    int bin;
    double amplitude;
    double phase;
  };

  PreviewModel(double t_start, double dt, int samples, double mean, std::vector<Mode> modes)
      : t_start_(t_start), dt_(dt), n_(samples), mean_(mean), modes_(std::move(modes))
  {}

  double height(double t) const
  {
    double v = mean_;
    for (const auto & m : modes_) { v += m.amplitude * std::cos(omega(m) * (t - t_start_) + m.phase); }
    return v;
  }

  double rate(double t) const
  {
    double v = 0.0;
    for (const auto & m : modes_) {
      const double om = omega(m);
      v -= m.amplitude * om * std::sin(om * (t - t_start_) + m.phase);
    }
    return v;
  }

  double window_start() const { return t_start_; }
  double window_end() const { return t_start_ + (n_ - 1) * dt_; }
  double window_length() const { return n_ * dt_; }
  double mean() const { return mean_; }
  const std::vector<Mode> & modes() const { return modes_; }

private:
  double omega(const Mode & m) const { return 2 * std::numbers::pi * m.bin / (n_ * dt_); }

  double t_start_, dt_;
  int n_;
  double mean_;
  std::vector<Mode> modes_;
};

/// DFT of the trailing @p window seconds of @p stream keeping the mean and the @p modes largest bins.
inline PreviewModel fit_preview(
  const MeasurementStream & stream, double window, int modes, double max_frequency = std::numeric_limits<double>::infinity())
{
  const auto n = static_cast<int>(std::lround(window / stream.sample_period));
  if (n < 2) { throw ContractError("fit_preview: window shorter than two samples"); }
  if (stream.size() < static_cast<std::size_t>(n)) { throw ContractError("fit_preview: stream does not cover the window"); }
  if (modes < 0) { throw ContractError("fit_preview: negative mode count"); }

  const std::size_t first = stream.size() - static_cast<std::size_t>(n);
  std::vector<double> in(stream.heights.begin() + static_cast<std::ptrdiff_t>(first), stream.heights.end());
  const int bins = n / 2 + 1;
  fftw_complex * out = fftw_alloc_complex(static_cast<std::size_t>(bins));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out, FFTW_ESTIMATE);
  fftw_execute(plan);

  const double mean = out[0][0] / n;
  std::vector<PreviewModel::Mode> all;
  const double resolution = 1.0 / (n * stream.sample_period);
  for (int k = 1; k < bins; ++k) {
    if (k * resolution > max_frequency * (1.0 + 1e-12)) { break; }
    const double re = out[k][0], im = out[k][1];
    const double scale = (n % 2 == 0 && k == n / 2) ? 1.0 / n : 2.0 / n;
    all.push_back({k, scale * std::hypot(re, im), std::atan2(im, re)});
  }
  fftw_destroy_plan(plan);
  fftw_free(out);

  std::stable_sort(all.begin(), all.end(), [](const auto & l, const auto & r) { return l.amplitude > r.amplitude; });
  all.resize(std::min(all.size(), static_cast<std::size_t>(modes)));
  return PreviewModel(stream.time(first), stream.sample_period, n, mean, std::move(all));
}

/// w2(t) = w(t - delta), held at the earliest available value before @p earliest.
template<typename Signal>
class DelayedSignal
{
public:
  DelayedSignal(Signal signal, double delta, double earliest = -std::numeric_limits<double>::infinity())
      : signal_(std::move(signal)), delta_(delta), earliest_(earliest)
  {
    if (!(delta >= 0.0)) { throw ContractError("delayed_rear: delay must be nonnegative"); }
  }

  bool clamped(double t) const { return t - delta_ < earliest_; }
  double height(double t) const { return signal_.height(std::max(t - delta_, earliest_)); }
  double rate(double t) const { return clamped(t) ? 0.0 : signal_.rate(t - delta_); }

private:
  Signal signal_;
  double delta_;
  double earliest_;
};

template<typename Signal>
DelayedSignal<Signal> delayed_rear(Signal signal, double delta, double earliest = -std::numeric_limits<double>::infinity())
{
  return DelayedSignal<Signal>(std::move(signal), delta, earliest);
}

struct PreviewOptions
{
  double window = 1.0;
  int modes = 10;
  /// Bins above this frequency (Hz) are not candidates; the halfcar scenario uses half the controller sampling rate.
  double max_frequency = std::numeric_limits<double>::infinity();
};

/**
 * @brief Halfcar road channel: the plant sees the analytic profile under both wheels; the
 * controller sees noisy 2 ms front-wheel measurements and a Fourier preview of them.
 *
 * Disturbance layout is (w1, w2, w1', w2'); observe() returns the noisy heights (w1, w2).
 */
class RoadPreviewChannel : public DisturbanceChannel
{
public:
  RoadPreviewChannel(RoadProfile profile, double wheelbase_delay, PreviewOptions opt = {})
      : profile_(std::move(profile)), delay_(wheelbase_delay), opt_(opt)
  {}

  void truth(double t, Vec & d) const override
  {
    d.resize(4);
    d << profile_.height(t), profile_.height(t - delay_), profile_.rate(t), profile_.rate(t - delay_);
  }

  Vec true_sample(double t) const override
  {
    Vec v(2);
    v << profile_.height(t), profile_.height(t - delay_);
    return v;
  }

  Vec observe(double t, double noise_amplitude, std::mt19937_64 & rng) override
  {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    if (stream_.heights.empty()) {
      // History long enough for the window and the wheelbase delay.
      stream_.t0 = grid_time(t - opt_.window - delay_ - 1.0);
      stream_.noise_amplitude = noise_amplitude;
    }
    while (stream_.heights.empty() || stream_.end_time() < t - 1e-9) {
      const double ts = stream_.time(stream_.heights.size());
      stream_.heights.push_back(profile_.height(ts) + noise_amplitude * unit(rng));
    }
    preview_ = std::make_shared<PreviewModel>(fit_preview(stream_, opt_.window, opt_.modes, opt_.max_frequency));
    Vec v(2);
    v << stream_.heights.back(), measured_at(t - delay_);
    return v;
  }

  DisturbanceSequence forecast(double t_start, double period, int count) const override
  {
    if (!preview_) { throw ContractError("road channel: forecast before any observation"); }
    const auto rear = delayed_rear(*preview_, delay_, preview_->window_start());
    DisturbanceSequence seq;
    seq.hold = DisturbanceHold::hermite;
    for (int k = 0; k < count; ++k) {
      const double t = t_start + k * period;
      Vec s(4);
      s << preview_->height(t), rear.height(t), preview_->rate(t), rear.rate(t);
      seq.samples.push_back(s);
    }
    return seq;
  }

  const MeasurementStream & stream() const { return stream_; }
  const RoadProfile & profile() const { return profile_; }
  double delay() const { return delay_; }

private:
  static double grid_time(double t) { return std::floor(t / kSamplePeriod) * kSamplePeriod; }

  double measured_at(double t) const
  {
    const double pos = (t - stream_.t0) / stream_.sample_period;
    const auto i = static_cast<long>(std::lround(std::clamp(pos, 0.0, static_cast<double>(stream_.size() - 1))));
    return stream_.heights[static_cast<std::size_t>(i)];
  }

  RoadProfile profile_;
  double delay_;
  PreviewOptions opt_;
  MeasurementStream stream_;
  std::shared_ptr<PreviewModel> preview_;
};

}  // namespace sensmpc::road
