#include "clreg/signal.hpp"

#include <cmath>
#include <complex>
#include <sstream>

#include "clreg/csvio.hpp"
#include "clreg/errors.hpp"
#include "json.hpp"

namespace clreg {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_signal(const MultiChannelSignal& sig) {
  if (sig.fs <= 0.0) throw invalid_input("signal: fs must be > 0");
  if (sig.channels.empty() || sig.channels[0].empty()) {
    throw invalid_input("signal: need at least one channel and one sample");
  }
  for (const auto& ch : sig.channels) {
    if (ch.size() != sig.channels[0].size()) {
      throw invalid_input("signal: ragged channels");
    }
  }
}

}  // namespace

void Biquad::process_inplace(std::vector<double>& x) const {
  // direct form II transposed
  double s1 = 0.0, s2 = 0.0;
  for (double& v : x) {
    const double in = v;
    const double out = b0 * in + s1;
    s1 = b1 * in - a1 * out + s2;
    s2 = b2 * in - a2 * out;
    v = out;
  }
}

Biquad design_notch(double fs, double f0, double q) {
  if (f0 <= 0.0 || f0 >= fs / 2.0) throw invalid_input("notch: f0 must lie in (0, fs/2)");
  if (q <= 0.0) throw invalid_input("notch: q must be > 0");
  const double w0 = 2.0 * kPi * f0 / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad bq;
  bq.b0 = 1.0 / a0;
  bq.b1 = -2.0 * std::cos(w0) / a0;
  bq.b2 = 1.0 / a0;
  bq.a1 = -2.0 * std::cos(w0) / a0;
  bq.a2 = (1.0 - alpha) / a0;
  return bq;
}

MultiChannelSignal notch_filter(const MultiChannelSignal& sig, double f0, double q) {
  check_signal(sig);
  const Biquad bq = design_notch(sig.fs, f0, q);
  MultiChannelSignal out = sig;
  for (auto& ch : out.channels) bq.process_inplace(ch);
  return out;
}

namespace {

// digital response of one biquad at angular frequency w
std::complex<double> biquad_response(const Biquad& bq, double w) {
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (bq.b0 + bq.b1 * z1 + bq.b2 * z2) / (1.0 + bq.a1 * z1 + bq.a2 * z2);
}

Biquad biquad_from_conjugate_pair(std::complex<double> pole, double num_b0, double num_b1,
                                  double num_b2) {
  Biquad bq;
  bq.b0 = num_b0;
  bq.b1 = num_b1;
  bq.b2 = num_b2;
  bq.a1 = -2.0 * pole.real();
  bq.a2 = std::norm(pole);
  return bq;
}

}  // namespace

std::vector<Biquad> design_butterworth_bandpass(double fs, double lo, double hi, int order) {
  if (!(0.0 < lo && lo < hi && hi < fs / 2.0)) {
    throw invalid_input("butterworth: need 0 < lo < hi < fs/2");
  }
  if (order < 1) throw invalid_input("butterworth: order must be >= 1");

  // prewarped analog band edges (T = 2 convention)
  const double w1 = std::tan(kPi * lo / fs);
  const double w2 = std::tan(kPi * hi / fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  // analog low-pass prototype poles, then LP->BP: each prototype pole p maps
  // to the two roots of s^2 - (bw*p) s + w0^2 = 0
  std::vector<std::complex<double>> bp_poles;
  const int n = order;
  for (int k = 1; k <= n; ++k) {
    const double theta = kPi * (2.0 * k + n - 1.0) / (2.0 * n);
    const std::complex<double> p(std::cos(theta), std::sin(theta));
    const std::complex<double> half = bw * p / 2.0;
    const std::complex<double> disc = std::sqrt(half * half - w0sq);
    bp_poles.push_back(half + disc);
    bp_poles.push_back(half - disc);
  }

  // bilinear transform z = (1 + s) / (1 - s); complex poles pair with their
  // conjugates, real poles (odd prototype order with wide bands) pair among
  // themselves
  std::vector<std::complex<double>> upper;
  std::vector<double> reals;
  for (const auto& s : bp_poles) {
    const std::complex<double> z = (1.0 + s) / (1.0 - s);
    if (std::fabs(z.imag()) < 1e-12) {
      reals.push_back(z.real());
    } else if (z.imag() > 0.0) {
      upper.push_back(z);
    }
  }

  // each section takes one (1 - z^-2) zero pair: N zeros at z=1, N at z=-1
  std::vector<Biquad> sections;
  sections.reserve(static_cast<std::size_t>(n));
  for (const auto& zp : upper) {
    sections.push_back(biquad_from_conjugate_pair(zp, 1.0, 0.0, -1.0));
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad bq;
    bq.b0 = 1.0;
    bq.b1 = 0.0;
    bq.b2 = -1.0;
    bq.a1 = -(reals[i] + reals[i + 1]);
    bq.a2 = reals[i] * reals[i + 1];
    sections.push_back(bq);
  }
  if (sections.size() != static_cast<std::size_t>(n)) {
    throw numeric_error("butterworth: pole pairing failed");
  }

  // normalize each section to unit gain at the geometric band center, where
  // the true Butterworth band-pass has |H| = 1
  const double wc = 2.0 * std::atan(std::sqrt(w0sq));
  for (auto& bq : sections) {
    const double g = std::abs(biquad_response(bq, wc));
    if (g <= 0.0) throw numeric_error("butterworth: degenerate section gain");
    bq.b0 /= g;
    bq.b1 /= g;
    bq.b2 /= g;
  }
  return sections;
}

double butterworth_bandpass_gain(double fs, double lo, double hi, int order, double f) {
  const double w1 = std::tan(kPi * lo / fs);
  const double w2 = std::tan(kPi * hi / fs);
  const double w = std::tan(kPi * f / fs);
  const double omega = (w * w - w1 * w2) / ((w2 - w1) * w);
  return 1.0 / std::sqrt(1.0 + std::pow(omega, 2.0 * order));
}

MultiChannelSignal butterworth_bandpass(const MultiChannelSignal& sig, double lo, double hi,
                                        int order) {
  check_signal(sig);
  const auto sections = design_butterworth_bandpass(sig.fs, lo, hi, order);
  MultiChannelSignal out = sig;
  for (auto& ch : out.channels) {
    for (const auto& bq : sections) bq.process_inplace(ch);
  }
  return out;
}

double excess_kurtosis(const std::vector<double>& x) {
  if (x.size() < 4) throw invalid_input("excess_kurtosis: need at least 4 samples");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  if (m2 <= 0.0) throw numeric_error("excess_kurtosis: degenerate variance");
  return m4 / (m2 * m2) - 3.0;
}

RejectionResult reject_by_kurtosis(const std::vector<std::vector<double>>& components,
                                   double z_thresh) {
  if (components.size() < 2) {
    throw invalid_input("reject_by_kurtosis: need at least 2 components");
  }
  const std::size_t c = components.size();
  std::vector<double> kurt(c);
  for (std::size_t i = 0; i < c; ++i) kurt[i] = excess_kurtosis(components[i]);

  double mean = 0.0;
  for (double k : kurt) mean += k;
  mean /= static_cast<double>(c);
  double var = 0.0;
  for (double k : kurt) var += (k - mean) * (k - mean);
  var /= static_cast<double>(c);
  const double sd = std::sqrt(var);

  RejectionResult result;
  result.cleaned = components;
  for (std::size_t i = 0; i < c; ++i) {
    const double z = sd > 0.0 ? (kurt[i] - mean) / sd : 0.0;
    if (std::fabs(z) > z_thresh) {
      result.rejected.insert(i);
      for (double& v : result.cleaned[i]) v = 0.0;
    }
  }
  return result;
}

std::vector<std::vector<std::vector<double>>> window_segments(const MultiChannelSignal& sig,
                                                              const WindowSpec& spec) {
  check_signal(sig);
  if (spec.overlap >= spec.chunk) throw invalid_input("window: overlap must be < chunk");
  if (spec.chunk == 0) throw invalid_input("window: chunk must be > 0");
  const std::size_t n = sig.sample_count();
  if (n < spec.chunk) throw invalid_input("window: signal shorter than one chunk");
  const std::size_t stride = spec.chunk - spec.overlap;
  std::vector<std::vector<std::vector<double>>> windows;
  for (std::size_t start = 0; start + spec.chunk <= n; start += stride) {
    std::vector<std::vector<double>> window;
    window.reserve(sig.channel_count());
    for (const auto& ch : sig.channels) {
      window.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(start),
                          ch.begin() + static_cast<std::ptrdiff_t>(start + spec.chunk));
    }
    windows.push_back(std::move(window));
  }
  return windows;
}

MultiChannelSignal mean_std_normalize(const MultiChannelSignal& sig) {
  check_signal(sig);
  MultiChannelSignal out = sig;
  for (auto& ch : out.channels) {
    const double n = static_cast<double>(ch.size());
    double mean = 0.0;
    for (double v : ch) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : ch) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= 0.0) throw numeric_error("mean_std_normalize: constant channel");
    const double sd = std::sqrt(var);
    for (double& v : ch) v = (v - mean) / sd;
  }
  return out;
}

void write_signal_csv(const MultiChannelSignal& sig, const std::filesystem::path& csv_path) {
  check_signal(sig);
  std::ostringstream out;
  for (const auto& ch : sig.channels) {
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (i) out << ",";
      out << format_double(ch[i]);
    }
    out << "\n";
  }
  write_text_file(csv_path, out.str());
  nlohmann::json meta;
  meta["fs"] = sig.fs;
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  write_text_file(sidecar, meta.dump() + "\n");
}

MultiChannelSignal read_signal_csv(const std::filesystem::path& csv_path) {
  MultiChannelSignal sig;
  for (const auto& line : read_lines(csv_path)) {
    if (line.empty()) continue;
    std::vector<double> ch;
    for (const auto& field : split_csv_line(line)) ch.push_back(parse_double(field));
    sig.channels.push_back(std::move(ch));
  }
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  const auto lines = read_lines(sidecar);
  std::string text;
  for (const auto& l : lines) text += l;
  sig.fs = nlohmann::json::parse(text).at("fs").get<double>();
  return sig;
}

}  // namespace clreg
