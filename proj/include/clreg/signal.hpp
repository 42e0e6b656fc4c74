#pragma once

#include <filesystem>
#include <set>
#include <vector>

namespace clreg {

struct MultiChannelSignal {
  std::vector<std::vector<double>> channels;  // C rows of N samples
  double fs = 0.0;                            // Hz

  std::size_t channel_count() const { return channels.size(); }
  std::size_t sample_count() const { return channels.empty() ? 0 : channels[0].size(); }
};

struct WindowSpec {
  std::size_t chunk = 384;
  std::size_t overlap = 128;
};

// Single second-order section, coefficients normalized to a0 = 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  void process_inplace(std::vector<double>& x) const;
};

// Constrained biquad notch at f0 with bandwidth f0/q; forward (causal) pass.
MultiChannelSignal notch_filter(const MultiChannelSignal& sig, double f0, double q);
Biquad design_notch(double fs, double f0, double q);

// Butterworth band-pass of prototype order N (2N poles, N cascaded biquads)
// designed by the bilinear transform; unit gain at the geometric band center.
MultiChannelSignal butterworth_bandpass(const MultiChannelSignal& sig, double lo, double hi,
                                        int order);
std::vector<Biquad> design_butterworth_bandpass(double fs, double lo, double hi, int order);

// Theoretical magnitude response of the band-pass design at frequency f;
// closed form from the analog prototype, independent of the biquad path.
double butterworth_bandpass_gain(double fs, double lo, double hi, int order, double f);

// m4/m2^2 - 3 with population moments; throws numeric_error on zero variance.
double excess_kurtosis(const std::vector<double>& x);

struct RejectionResult {
  std::vector<std::vector<double>> cleaned;
  std::set<std::size_t> rejected;
};

// Per-component excess kurtosis, z-scored across components; components with
// |z| > z_thresh are zeroed. Identical kurtoses give all-zero z (no rejection).
RejectionResult reject_by_kurtosis(const std::vector<std::vector<double>>& components,
                                   double z_thresh);

// Overlapping windows: starts at multiples of (chunk - overlap), while
// start + chunk <= N. Throws invalid_input when N < chunk.
std::vector<std::vector<std::vector<double>>> window_segments(const MultiChannelSignal& sig,
                                                              const WindowSpec& spec);

// Per channel: subtract mean, divide by population std.
MultiChannelSignal mean_std_normalize(const MultiChannelSignal& sig);

// CSV (one row per channel) plus sidecar JSON { "fs": <Hz> }.
void write_signal_csv(const MultiChannelSignal& sig, const std::filesystem::path& csv_path);
MultiChannelSignal read_signal_csv(const std::filesystem::path& csv_path);

}  // namespace clreg
