#pragma once

// Selects which images a designed corruption may touch: images containing
// the source concept (plus the target concept's images in targeted mode),
// capped at a fraction of the dataset by seeded uniform truncation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "nemc/dataset.hpp"
#include "nemc/errors.hpp"
#include "nemc/rng.hpp"

namespace nemc {

inline std::vector<std::int64_t> select_poison_subset(const ProbingDataset& ds,
                                                      std::int32_t sourceConcept,
                                                      std::optional<std::int32_t> targetConcept,
                                                      double maxFraction, std::uint64_t seed) {
    if (!(maxFraction > 0.0 && maxFraction <= 1.0)) {
        throw ConfigError("maxFraction must be in (0,1]");
    }
    ds.concepts.at(sourceConcept);
    if (targetConcept) ds.concepts.at(*targetConcept);

    bool sourceSeen = false;
    std::vector<std::int64_t> candidates;
    for (std::int64_t i = 0; i < ds.n(); ++i) {
        const bool src = ds.concept_present(i, sourceConcept);
        sourceSeen = sourceSeen || src;
        if (src || (targetConcept && ds.concept_present(i, *targetConcept))) {
            candidates.push_back(i);
        }
    }
    if (!sourceSeen) {
        throw ConfigError("empty poison set: source concept appears in no image");
    }

    const auto cap = static_cast<std::int64_t>(
        std::floor(maxFraction * static_cast<double>(ds.n())));
    if (static_cast<std::int64_t>(candidates.size()) > cap) {
        Rng rng = Rng::stream(seed, 0, 4);
        for (std::int64_t i = 0; i < cap; ++i) {
            const std::int64_t j =
                i + static_cast<std::int64_t>(rng.next_below(
                        static_cast<std::uint64_t>(static_cast<std::int64_t>(candidates.size()) - i)));
            std::swap(candidates[static_cast<std::size_t>(i)],
                      candidates[static_cast<std::size_t>(j)]);
        }
        candidates.resize(static_cast<std::size_t>(cap));
    }
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

}  // namespace nemc
