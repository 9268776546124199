#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "ecgdl/nn.hpp"
#include "ecgdl/wfdb.hpp"

namespace ecgdl::synthetic {

// Two class-conditional waveform families, ECG-like at 100 Hz:
//   normal   - narrow QRS-like pulses at a steady rate with a small T bump
//   abnormal - wide QRS, irregular beat spacing, extra 8 Hz oscillation
struct GeneratorConfig {
    double fs = 100.0;
    std::size_t n_samples = 1000;
    double noise_sigma = 0.03;
    double drift_amplitude = 0.0; // optional baseline wander, for pipeline fixtures
};

inline std::vector<double> make_waveform(int label, std::mt19937_64& rng,
                                         const GeneratorConfig& g = {}) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, g.noise_sigma);

    const double rate_hz = 1.0 + 0.4 * uni(rng); // 60-84 bpm
    const double phase = uni(rng) / rate_hz;
    const double qrs_width = label == 0 ? 0.02 : 0.06;   // seconds
    const double qrs_amp = label == 0 ? 1.0 : 0.8;
    const double osc_amp = label == 0 ? 0.0 : 0.25;
    const double jitter = label == 0 ? 0.0 : 0.15;

    std::vector<double> beat_times;
    double t = phase;
    while (t < static_cast<double>(g.n_samples) / g.fs + 1.0) {
        beat_times.push_back(t);
        t += 1.0 / rate_hz * (1.0 + jitter * (uni(rng) - 0.5));
    }

    std::vector<double> x(g.n_samples, 0.0);
    const double drift_f = 0.1 + 0.1 * uni(rng);
    const double drift_phase = 2.0 * std::numbers::pi * uni(rng);
    for (std::size_t i = 0; i < g.n_samples; ++i) {
        const double ti = static_cast<double>(i) / g.fs;
        double v = 0.0;
        for (double bt : beat_times) {
            const double d = ti - bt;
            v += qrs_amp * std::exp(-d * d / (2.0 * qrs_width * qrs_width));
            // T-wave bump 250 ms after the QRS
            const double dt = ti - bt - 0.25;
            v += 0.2 * std::exp(-dt * dt / (2.0 * 0.05 * 0.05));
        }
        v += osc_amp * std::sin(2.0 * std::numbers::pi * 8.0 * ti);
        v += g.drift_amplitude * std::sin(2.0 * std::numbers::pi * drift_f * ti + drift_phase);
        v += noise(rng);
        x[i] = v;
    }
    return x;
}

// Balanced labelled dataset as network input, single channel.
inline nn::Dataset make_dataset(std::size_t n_records, std::uint64_t seed,
                                const GeneratorConfig& g = {}) {
    std::mt19937_64 rng(seed);
    nn::Dataset ds;
    ds.x = Tensor({n_records, 1, g.n_samples});
    ds.y.resize(n_records);
    for (std::size_t i = 0; i < n_records; ++i) {
        const int label = static_cast<int>(i % 2);
        auto wave = make_waveform(label, rng, g);
        std::copy(wave.begin(), wave.end(), ds.x.data() + i * g.n_samples);
        ds.y[i] = label;
    }
    return ds;
}

// Multichannel record for WFDB fixture files (channels are lead-scaled copies).
inline wfdb::EcgRecord make_record(long ecg_id, int label, std::uint64_t seed,
                                   const std::vector<std::string>& leads,
                                   const GeneratorConfig& g = {}) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(ecg_id) * 0x9e3779b97f4a7c15ull);
    auto base = make_waveform(label, rng, g);
    wfdb::EcgRecord rec;
    rec.ecg_id = ecg_id;
    rec.sampling_rate = g.fs;
    rec.lead_names = leads;
    for (std::size_t c = 0; c < leads.size(); ++c) {
        const double scale = 0.6 + 0.4 * std::cos(static_cast<double>(c) * 0.5);
        std::vector<double> ch(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) ch[i] = scale * base[i];
        rec.samples.push_back(std::move(ch));
    }
    return rec;
}

} // namespace ecgdl::synthetic
