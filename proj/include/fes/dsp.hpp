#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace fes {

/// Second-order IIR section, normalized so a0 == 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

inline Biquad butter_lowpass(double fc_hz, double fs_hz, double q) {
  double w0 = 2.0 * M_PI * fc_hz / fs_hz;
  double c = std::cos(w0), s = std::sin(w0);
  double alpha = s / (2.0 * q);
  double a0 = 1.0 + alpha;
  Biquad b;
  b.b0 = (1.0 - c) / 2.0 / a0;
  b.b1 = (1.0 - c) / a0;
  b.b2 = b.b0;
  b.a1 = -2.0 * c / a0;
  b.a2 = (1.0 - alpha) / a0;
  return b;
}

inline Biquad butter_highpass(double fc_hz, double fs_hz, double q) {
  double w0 = 2.0 * M_PI * fc_hz / fs_hz;
  double c = std::cos(w0), s = std::sin(w0);
  double alpha = s / (2.0 * q);
  double a0 = 1.0 + alpha;
  Biquad b;
  b.b0 = (1.0 + c) / 2.0 / a0;
  b.b1 = -(1.0 + c) / a0;
  b.b2 = b.b0;
  b.a1 = -2.0 * c / a0;
  b.a2 = (1.0 - alpha) / a0;
  return b;
}

inline void biquad_forward(const Biquad& q, std::vector<double>& x) {
  double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
  for (double& v : x) {
    double x0 = v;
    double y0 = q.b0 * x0 + q.b1 * x1 + q.b2 * x2 - q.a1 * y1 - q.a2 * y2;
    x2 = x1;
    x1 = x0;
    y2 = y1;
    y1 = y0;
    v = y0;
  }
}

/// Zero-phase filtering: odd-reflection padding, forward pass, time reversal,
/// second pass, reversal, unpad.
inline void filtfilt(const std::vector<Biquad>& sections, std::vector<double>& x) {
  if (x.empty()) return;
  std::size_t pad = std::min<std::size_t>(x.size() - 1, 256);
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x.front() - x[pad - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 2 - i]);

  for (const Biquad& q : sections) biquad_forward(q, ext);
  std::reverse(ext.begin(), ext.end());
  for (const Biquad& q : sections) biquad_forward(q, ext);
  std::reverse(ext.begin(), ext.end());

  std::copy(ext.begin() + pad, ext.begin() + pad + x.size(), x.begin());
}

/// Acquisition band of the EMG amplifier: 10 Hz second-order high-pass plus
/// 900 Hz fourth-order low-pass (Butterworth Q pairing).
inline std::vector<Biquad> acquisition_band_sections(double fs_hz, double lo_hz = 10.0,
                                                     double hi_hz = 900.0) {
  return {
      butter_highpass(lo_hz, fs_hz, M_SQRT1_2),
      butter_lowpass(hi_hz, fs_hz, 0.54119610),
      butter_lowpass(hi_hz, fs_hz, 1.30656296),
  };
}

inline double rms(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

inline double rms(const float* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

} // namespace fes
