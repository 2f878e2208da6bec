// Wall-clock comparison of the OpenMP kernels against the serial reference.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include <omp.h>

#include "saf/kernels.hpp"
#include "saf/random.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<float> random_buffer(std::size_t n, saf::Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

template <class F>
double time_ms(F&& f, int reps) {
  f();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(static_cast<double>(a[i]) - b[i]));
  return d;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-28s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  max|diff| %.3g\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
  namespace k = saf::kernels;
  saf::Rng rng(42);
  const int reps = 5;
  std::printf("threads: %d\n", omp_get_max_threads());

  // Block-1 temporal conv at full scale: 15 electrodes, 6 s at 512 Hz.
  const k::TemporalConvShape ts{16, 1, 15, 3072, 8, 256};
  const auto tx = random_buffer(ts.batch * ts.in_channels * ts.rows * ts.width, rng);
  const auto tw = random_buffer(ts.out_channels * ts.taps, rng);
  std::vector<float> ty_s(ts.batch * ts.out_channels * ts.rows * ts.width), ty_p(ty_s.size());
  const double t_s = time_ms([&] { k::serial::temporal_conv_forward(ts, tx.data(), tw.data(), ty_s.data()); }, reps);
  const double t_p = time_ms([&] { k::temporal_conv_forward(ts, tx.data(), tw.data(), ty_p.data()); }, reps);
  report("temporal_conv_forward", t_s, t_p, max_abs_diff(ty_s, ty_p));

  std::vector<float> dx_s(tx.size()), dx_p(tx.size()), dw_s(tw.size()), dw_p(tw.size());
  const double tb_s = time_ms([&] {
    k::serial::temporal_conv_backward(ts, tx.data(), tw.data(), ty_s.data(), dx_s.data(), dw_s.data());
  }, 1);
  const double tb_p = time_ms([&] {
    k::temporal_conv_backward(ts, tx.data(), tw.data(), ty_s.data(), dx_p.data(), dw_p.data());
  }, 1);
  report("temporal_conv_backward", tb_s, tb_p, max_abs_diff(dx_s, dx_p));

  const k::SpatialConvShape ss{16, 8, 15, 3072, 2};
  const auto sx = random_buffer(ss.batch * ss.groups * ss.rows * ss.width, rng);
  const auto sw = random_buffer(ss.out_channels() * ss.rows, rng);
  std::vector<float> sy_s(ss.batch * ss.out_channels() * ss.width), sy_p(sy_s.size());
  const double s_s = time_ms([&] { k::serial::spatial_conv_forward(ss, sx.data(), sw.data(), sy_s.data()); }, reps);
  const double s_p = time_ms([&] { k::spatial_conv_forward(ss, sx.data(), sw.data(), sy_p.data()); }, reps);
  report("spatial_conv_forward", s_s, s_p, max_abs_diff(sy_s, sy_p));

  const k::PointwiseConvShape ps{16, 16, 768, 16};
  const auto px = random_buffer(ps.batch * ps.in_channels * ps.width, rng);
  const auto pw = random_buffer(ps.out_channels * ps.in_channels, rng);
  std::vector<float> py_s(ps.batch * ps.out_channels * ps.width), py_p(py_s.size());
  const double p_s = time_ms([&] { k::serial::pointwise_conv_forward(ps, px.data(), pw.data(), py_s.data()); }, reps);
  const double p_p = time_ms([&] { k::pointwise_conv_forward(ps, px.data(), pw.data(), py_p.data()); }, reps);
  report("pointwise_conv_forward", p_s, p_p, max_abs_diff(py_s, py_p));

  // Zero-phase band-pass over 15 channels x 60 s at 512 Hz.
  const auto sos = saf::butter_bandpass(4, 1.0, 128.0, 512.0);
  std::vector<double> sig(15 * 30720);
  for (auto& v : sig) v = rng.normal();
  auto a = sig, b = sig;
  const double f_s = time_ms([&] { a = sig; k::serial::filtfilt_channels(sos, a.data(), 15, 30720); }, reps);
  const double f_p = time_ms([&] { b = sig; k::filtfilt_channels(sos, b.data(), 15, 30720); }, reps);
  double fd = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) fd = std::max(fd, std::fabs(a[i] - b[i]));
  report("filtfilt_channels", f_s, f_p, fd);
  return 0;
}
