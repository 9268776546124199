#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "ecgdl/errors.hpp"
#include "ecgdl/wfdb.hpp"

namespace ecgdl::dsp {

// ---------------------------------------------------------------------------
// IIR low-pass (second-order sections)
// ---------------------------------------------------------------------------

struct SosSection {
    double b0 = 1, b1 = 0, b2 = 0; // numerator
    double a1 = 0, a2 = 0;         // denominator, unity a0
};

struct SosCascade {
    std::vector<SosSection> sections; // ordered by ascending pole Q
    int design_order = 0;
    double cutoff_hz = 0;
    double sampling_rate = 0;
};

// Complex response of the cascade at frequency f (Hz).
inline std::complex<double> sos_response(const SosCascade& sos, double freq_hz) {
    const double w = 2.0 * std::numbers::pi * freq_hz / sos.sampling_rate;
    const std::complex<double> z1 = std::polar(1.0, -w); // z^-1
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const auto& s : sos.sections)
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
}

// Butterworth low-pass: analog prototype poles, frequency pre-warping,
// bilinear transform, factored into biquads with per-section unity DC gain.
inline SosCascade design_lowpass(int order, double cutoff_hz, double fs) {
    if (order < 1) throw DesignError("order must be >= 1");
    if (cutoff_hz <= 0 || cutoff_hz >= fs / 2)
        throw DesignError("cutoff must lie in (0, fs/2)");

    const double pi = std::numbers::pi;
    const double warped = 2.0 * fs * std::tan(pi * cutoff_hz / fs);

    // analog poles on the Butterworth circle, left half plane
    std::vector<std::complex<double>> poles;
    for (int k = 1; k <= order; ++k) {
        const double theta = pi * (2.0 * k + order - 1.0) / (2.0 * order);
        poles.emplace_back(warped * std::cos(theta), warped * std::sin(theta));
    }

    struct PoleGroup {
        std::complex<double> pole; // digital; one of a conjugate pair, or real
        bool is_pair;
        double q;
    };
    std::vector<PoleGroup> groups;
    for (const auto& p : poles) {
        if (p.imag() < -1e-12) continue; // keep one of each conjugate pair
        const bool pair = p.imag() > 1e-12;
        const double q = pair ? std::abs(p) / (-2.0 * p.real()) : 0.5;
        const std::complex<double> zp = (2.0 * fs + p) / (2.0 * fs - p); // bilinear
        groups.push_back({zp, pair, q});
    }
    std::sort(groups.begin(), groups.end(),
              [](const PoleGroup& a, const PoleGroup& b) { return a.q < b.q; });

    SosCascade sos;
    sos.design_order = order;
    sos.cutoff_hz = cutoff_hz;
    sos.sampling_rate = fs;
    for (const auto& g : groups) {
        SosSection s;
        if (g.is_pair) {
            s.a1 = -2.0 * g.pole.real();
            s.a2 = std::norm(g.pole);
            const double k = (1.0 + s.a1 + s.a2) / 4.0; // zeros at z = -1, H(1) = 1
            s.b0 = k; s.b1 = 2.0 * k; s.b2 = k;
        } else {
            s.a1 = -g.pole.real();
            s.a2 = 0.0;
            const double k = (1.0 + s.a1) / 2.0;
            s.b0 = k; s.b1 = k; s.b2 = 0.0;
        }
        sos.sections.push_back(s);
    }
    return sos;
}

namespace detail {

// direct form II transposed with steady-state initial conditions scaled by
// the first input sample (unit-DC-gain sections, so zi for input 1 uses g=1)
inline void sos_pass(const SosCascade& sos, std::vector<double>& x) {
    for (const auto& s : sos.sections) {
        double z1 = (s.b1 + s.b2 - (s.a1 + s.a2)) * x[0];
        double z2 = (s.b2 - s.a2) * x[0];
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

} // namespace detail

// Output length equals input length. Zero-phase mode runs the cascade
// forward then backward over an odd-reflection padding of 3*order samples.
inline std::vector<double> apply_filter(const SosCascade& sos, const std::vector<double>& x,
                                        bool zero_phase = true) {
    const std::size_t pad = 3 * static_cast<std::size_t>(sos.design_order);
    if (x.size() <= pad)
        throw SignalTooShort("need more than " + std::to_string(pad) + " samples, got " +
                             std::to_string(x.size()));

    const std::size_t n = x.size();
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
        ext[i] = 2.0 * x[0] - x[pad - i];
        ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

    detail::sos_pass(sos, ext);
    if (zero_phase) {
        std::reverse(ext.begin(), ext.end());
        detail::sos_pass(sos, ext);
        std::reverse(ext.begin(), ext.end());
    }
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

// ---------------------------------------------------------------------------
// Discrete wavelet transform (Mallat cascade, symmetric extension)
// ---------------------------------------------------------------------------

struct WaveletSpec {
    std::string name;
    std::vector<double> dec_lo, dec_hi;
    std::vector<double> rec_lo, rec_hi;
};

// Orthogonal wavelet from its scaling coefficients (sum = sqrt 2):
// rec_lo = h, dec_lo = reverse(h), rec_hi = qmf(h), dec_hi = reverse(rec_hi).
inline WaveletSpec wavelet_from_scaling(std::string name, std::vector<double> h) {
    WaveletSpec w;
    w.name = std::move(name);
    const std::size_t f = h.size();
    w.rec_lo = h;
    w.dec_lo.assign(h.rbegin(), h.rend());
    w.rec_hi.resize(f);
    for (std::size_t k = 0; k < f; ++k)
        w.rec_hi[k] = ((k % 2 == 0) ? 1.0 : -1.0) * h[f - 1 - k];
    w.dec_hi.assign(w.rec_hi.rbegin(), w.rec_hi.rend());
    return w;
}

inline WaveletSpec make_wavelet(const std::string& name) {
    const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0);
    if (name == "haar" || name == "db1")
        return wavelet_from_scaling("haar", {1.0 / s2, 1.0 / s2});
    if (name == "db2")
        return wavelet_from_scaling("db2", {(1 + s3) / (4 * s2), (3 + s3) / (4 * s2),
                                            (3 - s3) / (4 * s2), (1 - s3) / (4 * s2)});
    if (name == "db4")
        return wavelet_from_scaling(
            "db4", {0.23037781330885523, 0.7148465705525415, 0.6308807679295904,
                    -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
                    0.032883011666982945, -0.010597401784997278});
    throw DesignError("unknown wavelet: " + name);
}

struct DwtCoefficients {
    std::vector<double> approximation;        // deepest level
    std::vector<std::vector<double>> details; // details[0] = level 1 (finest)
    std::size_t original_length = 0;
    std::size_t levels = 0;
};

namespace detail {

// symmetric (half-sample) extension index
inline std::size_t sym_index(std::ptrdiff_t i, std::size_t n) {
    const auto sn = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= sn) {
        if (i < 0) i = -i - 1;
        if (i >= sn) i = 2 * sn - 1 - i;
    }
    return static_cast<std::size_t>(i);
}

inline void dwt_single(const std::vector<double>& x, const WaveletSpec& w,
                       std::vector<double>& ca, std::vector<double>& cd) {
    const std::size_t f = w.dec_lo.size();
    const std::size_t n = x.size();
    const std::size_t out_len = (n + f - 1) / 2;
    ca.assign(out_len, 0.0);
    cd.assign(out_len, 0.0);
    for (std::size_t i = 0; i < out_len; ++i) {
        double a = 0.0, d = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
            const double v = x[sym_index(static_cast<std::ptrdiff_t>(2 * i + 1) -
                                         static_cast<std::ptrdiff_t>(j), n)];
            a += w.dec_lo[j] * v;
            d += w.dec_hi[j] * v;
        }
        ca[i] = a;
        cd[i] = d;
    }
}

inline std::vector<double> idwt_single(const std::vector<double>& ca,
                                       const std::vector<double>& cd, const WaveletSpec& w,
                                       std::size_t target_len) {
    if (ca.size() != cd.size())
        throw ReconstructionError("approximation/detail length mismatch");
    const std::size_t f = w.rec_lo.size();
    const std::size_t len = ca.size();
    if (2 * len + 2 < f)
        throw ReconstructionError("coefficient vector too short for filter");
    const std::size_t out_len = 2 * len - f + 2;
    if (target_len > out_len)
        throw ReconstructionError("inconsistent reconstruction length");

    // full upsampling convolution, then drop f-2 samples from each side
    std::vector<double> full(2 * len + f - 2, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            full[2 * i + j] += ca[i] * w.rec_lo[j] + cd[i] * w.rec_hi[j];
        }
    }
    std::vector<double> out(full.begin() + static_cast<std::ptrdiff_t>(f - 2),
                            full.begin() + static_cast<std::ptrdiff_t>(f - 2 + out_len));
    out.resize(target_len);
    return out;
}

inline std::vector<std::size_t> level_lengths(std::size_t n, std::size_t filter_len,
                                              std::size_t levels) {
    std::vector<std::size_t> lens{n};
    for (std::size_t l = 0; l < levels; ++l)
        lens.push_back((lens.back() + filter_len - 1) / 2);
    return lens;
}

} // namespace detail

inline DwtCoefficients dwt_analyze(const std::vector<double>& x, const WaveletSpec& w,
                                   std::size_t levels) {
    if (levels < 1) throw DecompositionError("levels must be >= 1");
    if (x.size() < (std::size_t{1} << levels))
        throw DecompositionError("signal of length " + std::to_string(x.size()) +
                                 " too short for " + std::to_string(levels) + " levels");
    DwtCoefficients c;
    c.original_length = x.size();
    c.levels = levels;
    std::vector<double> cur = x;
    for (std::size_t l = 0; l < levels; ++l) {
        std::vector<double> ca, cd;
        detail::dwt_single(cur, w, ca, cd);
        c.details.push_back(std::move(cd));
        cur = std::move(ca);
    }
    c.approximation = std::move(cur);
    return c;
}

inline std::vector<double> dwt_synthesize(const DwtCoefficients& c, const WaveletSpec& w) {
    if (c.levels < 1 || c.details.size() != c.levels)
        throw ReconstructionError("inconsistent coefficient set");
    const auto lens = detail::level_lengths(c.original_length, w.dec_lo.size(), c.levels);
    std::vector<double> cur = c.approximation;
    for (std::size_t l = c.levels; l-- > 0;) {
        if (cur.size() != lens[l + 1] || c.details[l].size() != lens[l + 1])
            throw ReconstructionError("coefficient length mismatch at level " +
                                      std::to_string(l + 1));
        cur = detail::idwt_single(cur, c.details[l], w, lens[l]);
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Baseline wander correction, rolling mean, quality gate
// ---------------------------------------------------------------------------

struct PreprocessConfig {
    int lowpass_order = 15;
    double lowpass_cutoff_hz = 45.0;
    std::string wavelet = "db4";
    double baseline_target_hz = 0.5;
    std::size_t rolling_window = 100;
    bool rolling_enabled = true;
    bool zero_phase = true;
};

// smallest L with fs / 2^(L+1) <= target (fs 100 -> 7, fs 500 -> 9)
inline std::size_t baseline_levels(double fs, double target_hz) {
    std::size_t levels = 1;
    while (fs / std::pow(2.0, static_cast<double>(levels + 1)) > target_hz) ++levels;
    return levels;
}

// Reconstruction from the approximation band only (all details zeroed).
inline std::vector<double> estimate_baseline(const std::vector<double>& x, double fs,
                                             const PreprocessConfig& cfg) {
    const std::size_t levels = baseline_levels(fs, cfg.baseline_target_hz);
    const auto w = make_wavelet(cfg.wavelet);
    auto coeffs = dwt_analyze(x, w, levels);
    for (auto& d : coeffs.details) std::fill(d.begin(), d.end(), 0.0);
    return dwt_synthesize(coeffs, w);
}

// Fixed = original - baseline, element-wise.
inline std::vector<double> remove_baseline(const std::vector<double>& x, double fs,
                                           const PreprocessConfig& cfg) {
    const auto baseline = estimate_baseline(x, fs, cfg);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - baseline[i];
    return out;
}

// Centered moving average; edge windows truncate to available samples.
inline std::vector<double> rolling_mean(const std::vector<double>& x, std::size_t window) {
    if (window == 0) throw InvalidWindow("window must be >= 1");
    const std::size_t n = x.size();
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    std::vector<double> out(n);
    const auto left = static_cast<std::ptrdiff_t>((window - 1) / 2);
    const auto right = static_cast<std::ptrdiff_t>(window / 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - left);
        const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1,
                                                 static_cast<std::ptrdiff_t>(i) + right);
        out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

struct GateDecision {
    bool keep = true;
    std::string reason;
    double worst_fraction = 0.0; // residual low-band energy / total energy
};

// Drop when a further baseline pass still finds more than max_fraction of the
// energy below the baseline band in any channel.
inline GateDecision quality_gate(const wfdb::EcgRecord& rec, double fs,
                                 const PreprocessConfig& cfg, double max_fraction = 0.10) {
    GateDecision d;
    for (std::size_t c = 0; c < rec.n_channels(); ++c) {
        const auto& x = rec.samples[c];
        double total = 0.0;
        for (double v : x) total += v * v;
        if (total == 0.0) continue;
        const auto residual = estimate_baseline(x, fs, cfg);
        double low = 0.0;
        for (double v : residual) low += v * v;
        const double frac = low / total;
        d.worst_fraction = std::max(d.worst_fraction, frac);
        if (frac > max_fraction) {
            d.keep = false;
            d.reason = "channel " + (c < rec.lead_names.size() ? rec.lead_names[c]
                                                               : std::to_string(c)) +
                       " residual baseline energy fraction " + std::to_string(frac);
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Spectrogram (report plumbing)
// ---------------------------------------------------------------------------

struct Spectrogram {
    std::vector<std::vector<double>> magnitude_db; // [bin][frame]
    std::vector<double> bin_hz;
    std::vector<double> frame_time_s;
    static constexpr double kFloorDb = -120.0;
};

inline Spectrogram stft_spectrogram(const std::vector<double>& x, double fs,
                                    std::size_t window = 256, std::size_t hop = 128) {
    if (x.size() < window)
        throw SignalTooShort("signal shorter than the analysis window");
    const std::size_t frames = 1 + (x.size() - window) / hop;
    const std::size_t bins = window / 2 + 1;
    const double pi = std::numbers::pi;

    std::vector<double> hann(window);
    for (std::size_t i = 0; i < window; ++i)
        hann[i] = 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) /
                                        static_cast<double>(window - 1)));

    Spectrogram sp;
    sp.magnitude_db.assign(bins, std::vector<double>(frames, Spectrogram::kFloorDb));
    for (std::size_t b = 0; b < bins; ++b)
        sp.bin_hz.push_back(static_cast<double>(b) * fs / static_cast<double>(window));
    for (std::size_t f = 0; f < frames; ++f)
        sp.frame_time_s.push_back(static_cast<double>(f * hop + window / 2) / fs);

    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t start = f * hop;
        for (std::size_t b = 0; b < bins; ++b) {
            double re = 0.0, im = 0.0;
            const double wstep = 2.0 * pi * static_cast<double>(b) / static_cast<double>(window);
            for (std::size_t i = 0; i < window; ++i) {
                const double v = x[start + i] * hann[i];
                re += v * std::cos(wstep * static_cast<double>(i));
                im -= v * std::sin(wstep * static_cast<double>(i));
            }
            const double mag = std::hypot(re, im);
            sp.magnitude_db[b][f] =
                std::max(Spectrogram::kFloorDb, 20.0 * std::log10(std::max(mag, 1e-300)));
        }
    }
    return sp;
}

// ---------------------------------------------------------------------------
// Full per-record conditioning: filter -> baseline removal -> rolling mean
// ---------------------------------------------------------------------------

inline wfdb::EcgRecord preprocess_record(const wfdb::EcgRecord& rec,
                                         const PreprocessConfig& cfg) {
    const auto sos = design_lowpass(cfg.lowpass_order, cfg.lowpass_cutoff_hz, rec.sampling_rate);
    wfdb::EcgRecord out = rec;
    for (auto& channel : out.samples) {
        channel = apply_filter(sos, channel, cfg.zero_phase);
        channel = remove_baseline(channel, rec.sampling_rate, cfg);
        if (cfg.rolling_enabled) channel = rolling_mean(channel, cfg.rolling_window);
    }
    return out;
}

} // namespace ecgdl::dsp
