#pragma once

#include <complex>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <vector>

#include "beamsight/errors.hpp"
#include "beamsight/rng.hpp"

namespace beamsight::channel {

using cplx = std::complex<double>;

// Receiver-side uniform linear array and its oversampled codebook grid.
struct CodebookConfig {
  std::size_t n_rx = 16;
  std::size_t n_beams = 64;
  double wavelength = 0.005;          // 60 GHz carrier
  double spacing = 0.0025;            // lambda / 2
  double azimuth_min = -std::numbers::pi / 4.0;
  double azimuth_max = std::numbers::pi / 4.0;

  void validate() const {
    if (n_rx == 0 || spacing <= 0.0 || wavelength <= 0.0)
      throw ConfigError("CodebookConfig: positive array geometry required");
    if (n_beams < n_rx)
      throw ConfigError("CodebookConfig: codebook must be oversampled (n_beams >= n_rx)");
    if (!(azimuth_max > azimuth_min)) throw ConfigError("CodebookConfig: empty azimuth range");
  }
};

struct Path {
  cplx gain;
  double delay_s = 0.0;
  double elevation_rad = 0.0;  // carried for scene realism; ULA response ignores it
  double azimuth_rad = 0.0;
};

struct PathSet {
  std::vector<Path> paths;
};

struct OfdmConfig {
  std::size_t n_subcarriers = 32;
  double symbol_period_s = 50e-9;
  double noise_variance = 0.0;
  double symbol_power = 1.0;

  void validate() const {
    if (n_subcarriers == 0) throw ConfigError("OfdmConfig: n_subcarriers must be >= 1");
    if (noise_variance < 0.0) throw ConfigError("OfdmConfig: negative noise variance");
  }
};

// Per-beam received powers, linear scale, unnormalized.
using PowerVector = std::vector<double>;

struct Codebook {
  CodebookConfig cfg;
  std::vector<double> angles_rad;          // ascending, one per beam
  std::vector<std::vector<cplx>> vectors;  // [n_beams][n_rx]
};

// Unit-norm ULA response at azimuth phi: element m = exp(j m 2pi/lambda d sin phi)/sqrt(N).
inline std::vector<cplx> steering_vector(const CodebookConfig& cfg, double phi) {
  const double norm = 1.0 / std::sqrt(static_cast<double>(cfg.n_rx));
  const double k = 2.0 * std::numbers::pi / cfg.wavelength * cfg.spacing * std::sin(phi);
  std::vector<cplx> v(cfg.n_rx);
  for (std::size_t m = 0; m < cfg.n_rx; ++m)
    v[m] = norm * std::exp(cplx(0.0, k * static_cast<double>(m)));
  return v;
}

// K beams on a uniform angle grid inclusive of both sector endpoints.
inline Codebook make_codebook(const CodebookConfig& cfg) {
  cfg.validate();
  if (cfg.n_beams < 2) throw ConfigError("make_codebook: at least 2 beams required");
  Codebook cb;
  cb.cfg = cfg;
  const double step = (cfg.azimuth_max - cfg.azimuth_min) / static_cast<double>(cfg.n_beams - 1);
  cb.angles_rad.resize(cfg.n_beams);
  cb.vectors.resize(cfg.n_beams);
  for (std::size_t i = 0; i < cfg.n_beams; ++i) {
    cb.angles_rad[i] = cfg.azimuth_min + step * static_cast<double>(i);
    cb.vectors[i] = steering_vector(cfg, cb.angles_rad[i]);
  }
  return cb;
}

// Frequency-domain per-path channel: h[m][q] = sqrt(N) sum_l a_l e^{-j2pi q tau_l/(Q Ts)} a_rx.
// Optional tap mode realizes the tap-domain double sum with a sinc pulse.
inline std::vector<std::vector<cplx>> synth_channel(const PathSet& paths, const OfdmConfig& ofdm,
                                                    const CodebookConfig& cb_cfg,
                                                    bool tap_mode = false) {
  ofdm.validate();
  if (paths.paths.empty()) throw DataError("synth_channel: empty path set");
  const double span = static_cast<double>(ofdm.n_subcarriers) * ofdm.symbol_period_s;
  for (const auto& p : paths.paths)
    if (p.delay_s < 0.0 || p.delay_s >= span)
      throw DataError("synth_channel: path delay outside the OFDM symbol span");

  const std::size_t q_total = ofdm.n_subcarriers;
  const double root_n = std::sqrt(static_cast<double>(cb_cfg.n_rx));
  std::vector<std::vector<cplx>> h(cb_cfg.n_rx, std::vector<cplx>(q_total, cplx(0.0, 0.0)));

  if (!tap_mode) {
    for (const auto& p : paths.paths) {
      const auto a = steering_vector(cb_cfg, p.azimuth_rad);
      for (std::size_t q = 0; q < q_total; ++q) {
        const double phase = -2.0 * std::numbers::pi * static_cast<double>(q) * p.delay_s /
                             (static_cast<double>(q_total) * ofdm.symbol_period_s);
        const cplx f = root_n * p.gain * std::exp(cplx(0.0, phase));
        for (std::size_t m = 0; m < cb_cfg.n_rx; ++m) h[m][q] += f * a[m];
      }
    }
    return h;
  }

  // Tap mode: D = Q taps, sinc pulse p(t) = sinc(t / Ts).
  auto sinc = [](double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
  };
  for (const auto& p : paths.paths) {
    const auto a = steering_vector(cb_cfg, p.azimuth_rad);
    for (std::size_t d = 0; d < q_total; ++d) {
      const double pulse =
          sinc((static_cast<double>(d) * ofdm.symbol_period_s - p.delay_s) / ofdm.symbol_period_s);
      if (pulse == 0.0) continue;
      for (std::size_t q = 0; q < q_total; ++q) {
        const double phase = -2.0 * std::numbers::pi * static_cast<double>(q) *
                             static_cast<double>(d) / static_cast<double>(q_total);
        const cplx f = root_n * p.gain * pulse * std::exp(cplx(0.0, phase));
        for (std::size_t m = 0; m < cb_cfg.n_rx; ++m) h[m][q] += f * a[m];
      }
    }
  }
  return h;
}

// powers[k] = sum_q |h^H[q] c_k s[q] (+ noise)|^2 with s[q] = sqrt(Ps).
inline PowerVector received_power(const std::vector<std::vector<cplx>>& h, const Codebook& cb,
                                  const OfdmConfig& ofdm, std::uint64_t rng_seed = 0) {
  ofdm.validate();
  if (h.size() != cb.cfg.n_rx) throw DataError("received_power: channel/codebook dims disagree");
  const std::size_t q_total = h.empty() ? 0 : h[0].size();
  const double s = std::sqrt(ofdm.symbol_power);
  const bool noisy = ofdm.noise_variance > 0.0;
  Rng rng(rng_seed);
  const double noise_sigma = noisy ? std::sqrt(ofdm.noise_variance / 2.0) : 0.0;

  PowerVector powers(cb.vectors.size(), 0.0);
  for (std::size_t k = 0; k < cb.vectors.size(); ++k) {
    const auto& c = cb.vectors[k];
    double acc = 0.0;
    for (std::size_t q = 0; q < q_total; ++q) {
      cplx r(0.0, 0.0);
      for (std::size_t m = 0; m < cb.cfg.n_rx; ++m) r += std::conj(h[m][q]) * c[m];
      r *= s;
      if (noisy) r += cplx(rng.normal(0.0, noise_sigma), rng.normal(0.0, noise_sigma));
      acc += std::norm(r);
    }
    powers[k] = acc;
  }
  return powers;
}

// Argmax beam; ties break toward the lowest index.
inline std::size_t optimal_beam(const PowerVector& powers) {
  if (powers.empty()) throw DataError("optimal_beam: empty power vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < powers.size(); ++i)
    if (powers[i] > powers[best]) best = i;
  return best;
}

// CSV dump: beam_index, angle_rad, then re/im per element.
inline void dump_codebook_csv(const Codebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("dump_codebook_csv: cannot open " + path);
  out << "beam_index,angle_rad";
  for (std::size_t m = 0; m < cb.cfg.n_rx; ++m) out << ",re" << m << ",im" << m;
  out << "\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < cb.vectors.size(); ++k) {
    out << k << "," << cb.angles_rad[k];
    for (const auto& c : cb.vectors[k]) out << "," << c.real() << "," << c.imag();
    out << "\n";
  }
}

}  // namespace beamsight::channel
