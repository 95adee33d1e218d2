#include "keynet/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "keynet/rng.hpp"

namespace keynet::sensor {
namespace {

std::ptrdiff_t floor_mod(std::ptrdiff_t a, std::ptrdiff_t m) {
  const std::ptrdiff_t r = a % m;
  return r < 0 ? r + m : r;
}

// Indices (into cores) of the two cores in `row` whose centres are nearest x.
void nearest_two(const std::vector<std::size_t>& row, const std::vector<Core>& cores,
                 double x, std::vector<std::size_t>& out) {
  std::size_t best[2] = {SIZE_MAX, SIZE_MAX};
  double dist[2] = {INFINITY, INFINITY};
  for (const std::size_t k : row) {
    const double d = std::abs(cores[k].center_x - x);
    if (d < dist[0]) {
      best[1] = best[0];
      dist[1] = dist[0];
      best[0] = k;
      dist[0] = d;
    } else if (d < dist[1]) {
      best[1] = k;
      dist[1] = d;
    }
  }
  for (const std::size_t b : best)
    if (b != SIZE_MAX) out.push_back(b);
}

double draw_poisson(double mean, const CmosConfig& cfg, Rng& rng) {
  if (mean <= 0.0) return 0.0;
  if (mean > cfg.gaussian_threshold) return mean + std::sqrt(mean) * rng.normal();
  std::poisson_distribution<long long> d(mean);
  return static_cast<double>(d(rng));
}

double pixel_value(const std::vector<double>& per_pixel, double fallback,
                   std::size_t i) {
  return per_pixel.empty() ? fallback : per_pixel[i];
}

}  // namespace

void validate(const FiberBundleConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0)
    throw ParameterError("fiber: image size must be positive");
  if (cfg.core_rows == 0 || cfg.core_cols == 0)
    throw ParameterError("fiber: core size must be >= 1 px");
  if (cfg.core_rows > cfg.height || cfg.core_cols > cfg.width)
    throw ParameterError("fiber: core larger than image");
  if (!(cfg.core_area_ratio > 0.0 && cfg.core_area_ratio <= 1.0))
    throw ParameterError("fiber: core/cladding area ratio must be in (0, 1]");
  if (!(cfg.blocking >= 0.0 && cfg.blocking <= 1.0))
    throw ParameterError("fiber: blocking value must be in [0, 1]");
  if (!(cfg.crosstalk_v >= 0.0) || !(cfg.crosstalk_h >= 0.0))
    throw ParameterError("fiber: crosstalk coefficients must be >= 0");
}

void validate(const CmosConfig& cfg) {
  const std::size_t n = cfg.height * cfg.width;
  if (n == 0) throw ParameterError("cmos: pixel grid must be non-empty");
  if (!(cfg.quantum_efficiency >= 0.0 && cfg.quantum_efficiency <= 1.0))
    throw ParameterError("cmos: quantum efficiency must be in [0, 1]");
  if (!(cfg.integration_time >= 0.0))
    throw ParameterError("cmos: integration time must be >= 0");
  if (cfg.adc_bits < 8 || cfg.adc_bits > 16)
    throw ParameterError("cmos: ADC depth must be in [8, 16] bits");
  if (!(cfg.dark_mean0 >= 0.0) || !(cfg.dark_var0 >= 0.0) ||
      !(cfg.dark_slope >= 0.0) || !(cfg.adc_noise_var >= 0.0))
    throw ParameterError("cmos: dark and noise parameters must be >= 0");
  if (!cfg.gain.empty() && cfg.gain.size() != n)
    throw ParameterError("cmos: gain matrix does not match the pixel grid");
  if (!cfg.bias.empty() && cfg.bias.size() != n)
    throw ParameterError("cmos: bias matrix does not match the pixel grid");
}

std::vector<Core> fiber_cores(const FiberBundleConfig& cfg) {
  validate(cfg);
  const auto H = static_cast<std::ptrdiff_t>(cfg.height);
  const auto W = static_cast<std::ptrdiff_t>(cfg.width);
  const auto pad = static_cast<std::ptrdiff_t>(cfg.pad);
  const auto cr = static_cast<std::ptrdiff_t>(cfg.core_rows);
  const auto cc = static_cast<std::ptrdiff_t>(cfg.core_cols);
  const double side = std::sqrt(cfg.core_area_ratio);
  const auto ah = std::max<std::ptrdiff_t>(1, std::llround(static_cast<double>(cr) * side));
  const auto aw = std::max<std::ptrdiff_t>(1, std::llround(static_cast<double>(cc) * side));
  const std::ptrdiff_t inset_y = (cr - ah) / 2;
  const std::ptrdiff_t inset_x = (cc - aw) / 2;

  std::vector<Core> cores;
  const std::ptrdiff_t grid_rows = (H + 2 * pad + cr - 1) / cr;
  for (std::ptrdiff_t j = 0; j < grid_rows; ++j) {
    const std::ptrdiff_t top = -pad + j * cr;
    // Brick layout: odd rows shifted by half a core, plus shear.
    const std::ptrdiff_t offset =
        (j % 2 == 1 ? cc / 2 : 0) + std::llround(cfg.shear * static_cast<double>(j));
    const std::ptrdiff_t m = floor_mod(offset, cc);
    for (std::ptrdiff_t left = -pad + m - (m > 0 ? cc : 0); left < W + pad; left += cc) {
      Core core;
      core.grid_row = static_cast<std::size_t>(j);
      core.center_x = static_cast<double>(left) + static_cast<double>(cc) / 2.0;
      for (std::ptrdiff_t y = top + inset_y; y < top + inset_y + ah; ++y) {
        if (y < 0 || y >= H) continue;
        for (std::ptrdiff_t x = left + inset_x; x < left + inset_x + aw; ++x) {
          if (x < 0 || x >= W) continue;
          core.pixels.push_back(static_cast<std::size_t>(y * W + x));
        }
      }
      if (!core.pixels.empty()) cores.push_back(std::move(core));
    }
  }
  return cores;
}

Image simulate_fiber_bundle(const Image& img, const FiberBundleConfig& cfg,
                            std::uint64_t /*seed*/) {
  if (img.height != cfg.height || img.width != cfg.width)
    throw ShapeError("fiber: image is " + std::to_string(img.height) + "x" +
                     std::to_string(img.width) + ", config expects " +
                     std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  const auto cores = fiber_cores(cfg);
  const std::size_t n = cores.size();

  std::vector<double> value(n);
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0;
    for (const std::size_t p : cores[k].pixels) sum += img.pixels[p];
    value[k] = sum / static_cast<double>(cores[k].pixels.size());
  }

  if (!cfg.routing.empty()) {
    if (cfg.routing.size() != n)
      throw ParameterError("fiber: routing map has " + std::to_string(cfg.routing.size()) +
                           " entries for " + std::to_string(n) + " cores");
    std::vector<double> routed(n);
    std::vector<std::uint8_t> hit(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t dst = cfg.routing[k];
      if (dst >= n || hit[dst]) throw ParameterError("fiber: routing map is not a permutation");
      hit[dst] = 1;
      routed[dst] = value[k];
    }
    value = std::move(routed);
  }

  if (cfg.crosstalk_v > 0.0 || cfg.crosstalk_h > 0.0) {
    std::size_t rows = 0;
    for (const auto& c : cores) rows = std::max(rows, c.grid_row + 1);
    std::vector<std::vector<std::size_t>> by_row(rows);
    for (std::size_t k = 0; k < n; ++k) by_row[cores[k].grid_row].push_back(k);

    std::vector<double> mixed(n);
    std::vector<std::size_t> vert;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = cores[k].grid_row;
      vert.clear();
      if (j > 0) nearest_two(by_row[j - 1], cores, cores[k].center_x, vert);
      if (j + 1 < rows) nearest_two(by_row[j + 1], cores, cores[k].center_x, vert);
      double v_sum = 0.0;
      for (const std::size_t q : vert) v_sum += value[q];
      double h_sum = 0.0;
      if (k > 0 && cores[k - 1].grid_row == j) h_sum += value[k - 1];
      if (k + 1 < n && cores[k + 1].grid_row == j) h_sum += value[k + 1];
      mixed[k] = value[k] + cfg.crosstalk_v * v_sum + cfg.crosstalk_h * h_sum;
    }
    // Rescale so the brightest core matches the brightest input pixel.
    const double img_max = *std::max_element(img.pixels.begin(), img.pixels.end());
    const double mix_max = *std::max_element(mixed.begin(), mixed.end());
    if (mix_max > 0.0 && img_max > 0.0)
      for (auto& v : mixed) v *= img_max / mix_max;
    value = std::move(mixed);
  }

  Image out(img.height, img.width, cfg.blocking);
  for (std::size_t k = 0; k < n; ++k)
    for (const std::size_t p : cores[k].pixels) out.pixels[p] = value[k];
  return out;
}

double cmos_mean(const CmosConfig& cfg, double photons, double gain) {
  const double electrons = cfg.quantum_efficiency * photons;
  const double dark = cfg.dark_mean0 + cfg.dark_slope * cfg.integration_time;
  return gain * (electrons + dark);
}

double cmos_variance(const CmosConfig& cfg, double photons, double gain) {
  const double electrons = cfg.quantum_efficiency * photons;
  const double dark_var = cfg.dark_var0 + cfg.dark_slope * cfg.integration_time;
  return gain * gain * dark_var + cfg.adc_noise_var + gain * gain * electrons;
}

CmosOutput simulate_cmos(const Image& photons, const CmosConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (photons.height != cfg.height || photons.width != cfg.width)
    throw ShapeError("cmos: image does not match the pixel grid");
  for (const double p : photons.pixels)
    if (!(p >= 0.0)) throw ContractError("cmos: photon counts must be >= 0");

  const double full_scale = std::ldexp(1.0, static_cast<int>(cfg.adc_bits)) - 1.0;
  CmosOutput out{Image(cfg.height, cfg.width), Image(cfg.height, cfg.width)};
  Rng rng(seed);
  const double dark_poisson_mean = cfg.dark_slope * cfg.integration_time;
  for (std::size_t i = 0; i < photons.pixels.size(); ++i) {
    const double g = pixel_value(cfg.gain, cfg.system_gain, i);
    const double b = pixel_value(cfg.bias, 0.0, i);
    double signal = 0.0;
    if (cfg.mean_mode) {
      signal = cmos_mean(cfg, photons.pixels[i], g) + b;
    } else {
      const double electrons =
          draw_poisson(cfg.quantum_efficiency * photons.pixels[i], cfg, rng);
      const double dark = cfg.dark_mean0 + std::sqrt(cfg.dark_var0) * rng.normal() +
                          draw_poisson(dark_poisson_mean, cfg, rng);
      signal = g * (electrons + dark) + b + std::sqrt(cfg.adc_noise_var) * rng.normal();
    }
    out.analog.pixels[i] = signal;
    out.digital.pixels[i] = std::clamp(std::nearbyint(signal), 0.0, full_scale);
  }
  return out;
}

Realization realize_key(const keys::KeyMatrix& k, const FiberBundleConfig& fiber_template,
                        const CmosConfig& cmos_template, bool require_exact) {
  const std::size_t n = fiber_template.height * fiber_template.width;
  if (k.dim() != n)
    throw ShapeError("realize_key: key of dim " + std::to_string(k.dim()) +
                     " for a " + std::to_string(n) + "-pixel sensor");
  if (cmos_template.height != fiber_template.height ||
      cmos_template.width != fiber_template.width)
    throw ShapeError("realize_key: fiber and CMOS grids differ");
  if (k.alpha() > 1 && require_exact)
    throw UnsupportedExact("realize_key: alpha " + std::to_string(k.alpha()) +
                           " key has no exact fiber realization");

  Realization r;
  r.exact = k.alpha() == 1;
  r.fiber = fiber_template;
  r.fiber.core_rows = r.fiber.core_cols = 1;
  r.fiber.core_area_ratio = 1.0;
  r.fiber.pad = 0;
  r.fiber.shear = 0.0;
  r.fiber.crosstalk_v = r.fiber.crosstalk_h = 0.0;
  r.fiber.routing.assign(n, 0);
  r.cmos = cmos_template;
  r.cmos.quantum_efficiency = 1.0;
  r.cmos.dark_mean0 = r.cmos.dark_var0 = r.cmos.dark_slope = 0.0;
  r.cmos.gain.assign(n, 0.0);
  r.cmos.bias.assign(n, 0.0);

  // Row i of the forward block is d_i * S[pg(i), :]; its largest entry sits at
  // column pg(i) because every stochastic block is diagonally dominant.
  const auto& fwd = k.forward();
  double resid2 = 0.0;
  double total2 = 0.0;
  double off_mass = 0.0;
  std::vector<std::uint8_t> taken(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = fwd.row(i);
    std::size_t arg = SIZE_MAX;
    double best = -1.0;
    double row_sum = 0.0;
    for (std::size_t q = 0; q < row.size(); ++q) {
      if (row.cols[q] == n) {
        r.cmos.bias[i] = row.values[q];
        continue;
      }
      row_sum += row.values[q];
      total2 += row.values[q] * row.values[q];
      if (row.values[q] > best) {
        best = row.values[q];
        arg = row.cols[q];
      }
    }
    if (arg == SIZE_MAX || taken[arg])
      throw ContractError("realize_key: key has no dominant permutation");
    taken[arg] = 1;
    r.fiber.routing[arg] = i;
    if (r.exact) {
      r.cmos.gain[i] = best;
    } else {
      // Preserve row mass; the mixing fraction leaks through crosstalk.
      r.cmos.gain[i] = row_sum;
      off_mass += 1.0 - best / row_sum;
      for (std::size_t q = 0; q < row.size(); ++q) {
        if (row.cols[q] == n) continue;
        const double approx = row.cols[q] == arg ? row_sum : 0.0;
        resid2 += (row.values[q] - approx) * (row.values[q] - approx);
      }
    }
  }
  if (!r.exact) {
    const double c = off_mass / static_cast<double>(n) / 6.0;
    r.fiber.crosstalk_v = r.fiber.crosstalk_h = c;
    r.mixing_residual = total2 > 0.0 ? std::sqrt(resid2 / total2) : 0.0;
  }
  return r;
}

CmosOutput run_pipeline(const Image& img, const Realization& r, std::uint64_t seed) {
  const Rng root(seed);
  const Image optical = simulate_fiber_bundle(img, r.fiber, root.split(0).seed());
  return simulate_cmos(optical, r.cmos, root.split(1).seed());
}

}  // namespace keynet::sensor
