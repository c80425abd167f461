#pragma once

// Random pixel noise over a seeded subset of images. Masks and labels are
// never touched; every application appends to the dataset's corruption log.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nemc/dataset.hpp"
#include "nemc/errors.hpp"
#include "nemc/rng.hpp"

namespace nemc {

enum class NoiseKind { Gaussian, Uniform, Bernoulli };

inline const char* noise_kind_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::Gaussian: return "gaussian";
        case NoiseKind::Uniform: return "uniform";
        case NoiseKind::Bernoulli: return "bernoulli";
    }
    throw ConfigError("bad noise kind value");
}

inline NoiseKind noise_kind_from_name(const std::string& s) {
    if (s == "gaussian") return NoiseKind::Gaussian;
    if (s == "uniform") return NoiseKind::Uniform;
    if (s == "bernoulli") return NoiseKind::Bernoulli;
    throw ConfigError("unknown noise kind: " + s);
}

struct NoiseConfig {
    NoiseKind kind = NoiseKind::Gaussian;
    double level = 0.0;     // std (gaussian/uniform) or amplitude (bernoulli), pixel units
    double fraction = 1.0;  // share of images that receive noise
    std::uint64_t seed = 0;
    bool clampToValid = true;

    void validate() const {
        if (level < 0.0) throw ConfigError("noise level must be >= 0");
        if (fraction < 0.0 || fraction > 1.0) throw ConfigError("noise fraction must be in [0,1]");
    }
};

// First ⌊fraction·N⌋ positions of a seeded uniform shuffle, ascending.
inline std::vector<std::int64_t> choose_images(std::int64_t n, double fraction,
                                               std::uint64_t seed) {
    const std::int64_t count = static_cast<std::int64_t>(std::floor(
        fraction * static_cast<double>(n)));
    std::vector<std::int64_t> all(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    Rng rng = Rng::stream(seed, 0, 2);
    for (std::int64_t i = 0; i < count; ++i) {
        const std::int64_t j =
            i + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(count));
    std::sort(all.begin(), all.end());
    return all;
}

inline double sample_noise(Rng& rng, NoiseKind kind, double level) {
    switch (kind) {
        case NoiseKind::Gaussian: return level * rng.next_gaussian();
        case NoiseKind::Uniform: {
            const double a = level * std::sqrt(3.0);
            return rng.next_range(-a, a);
        }
        case NoiseKind::Bernoulli: return rng.next_bool() ? level : -level;
    }
    throw ConfigError("bad noise kind value");
}

inline ProbingDataset add_random_noise(const ProbingDataset& ds, const NoiseConfig& cfg) {
    cfg.validate();
    ProbingDataset out = ds;
    const std::vector<std::int64_t> chosen = choose_images(ds.n(), cfg.fraction, cfg.seed);
    const std::int64_t per = 3 * ds.height() * ds.width();
    for (const std::int64_t i : chosen) {
        Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i), 3);
        float* px = out.images.data() + i * per;
        for (std::int64_t p = 0; p < per; ++p) {
            float v = static_cast<float>(static_cast<double>(px[p]) +
                                         sample_noise(rng, cfg.kind, cfg.level));
            if (cfg.clampToValid) v = std::clamp(v, 0.0f, 1.0f);
            px[p] = v;
        }
    }
    nlohmann::json entry{{"op", "random_noise"},
                         {"kind", noise_kind_name(cfg.kind)},
                         {"level", cfg.level},
                         {"fraction", cfg.fraction},
                         {"seed", cfg.seed},
                         {"clamp_to_valid", cfg.clampToValid},
                         {"images", chosen}};
    out.provenance.corruption_log.push_back(std::move(entry));
    return out;
}

}  // namespace nemc
