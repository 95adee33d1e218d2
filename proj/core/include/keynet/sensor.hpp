#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "keynet/errors.hpp"
#include "keynet/keys.hpp"

namespace keynet::sensor {

// Single-channel row-major image.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

struct FiberBundleConfig {
  std::size_t height = 1;
  std::size_t width = 1;
  // Mask margin around the image, in pixels.
  std::size_t pad = 0;
  // Core pitch in pixels (row, column).
  std::size_t core_rows = 1;
  std::size_t core_cols = 1;
  // Transmitting fraction of each core cell, in (0, 1].
  double core_area_ratio = 1.0;
  // Extra horizontal core offset per core row, in pixels.
  double shear = 0.0;
  // Value written to pixels outside every core, in [0, 1] of full scale.
  double blocking = 0.0;
  double crosstalk_v = 0.0;
  double crosstalk_h = 0.0;
  // routing[k] = output core of input core k (cores in row-major order).
  // Empty means identity.
  std::vector<std::size_t> routing;
};

struct CmosConfig {
  std::size_t height = 1;
  std::size_t width = 1;
  double quantum_efficiency = 1.0;   // nu
  double dark_mean0 = 0.0;           // mu_d0, electrons
  double dark_var0 = 0.0;            // sigma_d0^2, electrons^2
  double dark_slope = 0.0;           // mu_I, electrons per unit time
  double integration_time = 0.0;    // t_int
  // Per-pixel gain (G_sys, counts per electron); empty means system_gain
  // everywhere.
  std::vector<double> gain;
  double system_gain = 1.0;
  // Per-pixel analog offset in counts; empty means zero.
  std::vector<double> bias;
  unsigned adc_bits = 16;
  double adc_noise_var = 0.0;        // sigma_q^2, counts^2
  // Deterministic mean mode: every random draw replaced by its mean.
  bool mean_mode = false;
  // Poisson draws switch to a Gaussian approximation above this mean.
  double gaussian_threshold = 1000.0;
};

void validate(const FiberBundleConfig& cfg);
void validate(const CmosConfig& cfg);

// Geometry of one transmitting core, clipped to the image.
struct Core {
  std::size_t grid_row = 0;
  double center_x = 0.0;  // image coordinates, for neighbour lookup
  std::vector<std::size_t> pixels;  // row-major indices inside the image
};

// Cores that cover at least one image pixel, in row-major grid order.
std::vector<Core> fiber_cores(const FiberBundleConfig& cfg);

// Intensity-averages the image into fiber cores laid out in a brick pattern,
// routes core values, applies neighbour crosstalk and paints the cores back.
// The model is deterministic; seed is accepted for pipeline uniformity.
Image simulate_fiber_bundle(const Image& img, const FiberBundleConfig& cfg,
                            std::uint64_t seed);

struct CmosOutput {
  Image analog;   // counts before quantization
  Image digital;  // integer counts in [0, 2^bits - 1]
};

// Per pixel: photoelectrons ~ Poisson(nu * photons), dark electrons
// mu_d0 + N(0, sigma_d0^2) + Poisson(mu_I * t_int), signal
// G * (e + dark) + bias + N(0, sigma_q^2), then ADC rounding and clipping.
CmosOutput simulate_cmos(const Image& photons, const CmosConfig& cfg,
                         std::uint64_t seed);

// Closed-form statistics of the analog signal at one pixel.
double cmos_mean(const CmosConfig& cfg, double photons, double gain);
double cmos_variance(const CmosConfig& cfg, double photons, double gain);

class UnsupportedExact : public ContractError {
 public:
  using ContractError::ContractError;
};

struct Realization {
  FiberBundleConfig fiber;
  CmosConfig cmos;
  bool exact = false;
  // Relative Frobenius residual of the realized scaled permutation against
  // the key's forward block. Zero for exact realizations.
  double mixing_residual = 0.0;
};

// Maps an image key onto fiber routing (permutation) and per-pixel analog gain
// and bias. alpha == 1 keys are realized exactly; alpha > 1 keys are
// approximated by their dominant permutation with residual mixing mapped to
// crosstalk, unless require_exact is set.
Realization realize_key(const keys::KeyMatrix& k, const FiberBundleConfig& fiber_template,
                        const CmosConfig& cmos_template, bool require_exact = false);

// simulate_cmos(simulate_fiber_bundle(img)).
CmosOutput run_pipeline(const Image& img, const Realization& r, std::uint64_t seed);

}  // namespace keynet::sensor
