#include <gtest/gtest.h>

#include <map>

#include "nemc/synthetic.hpp"
#include "scenario.hpp"

using nemc::ConceptCategory;
using nemc::ConceptSet;
using nemc::ConfigError;
using nemc::ProbingDataset;

namespace {

ConceptSet single(const std::string& name, ConceptCategory cat) {
    ConceptSet set;
    set.concepts = {{0, name, cat}};
    return set;
}

TEST(Synthetic, SingleRedConceptMaskCoversExactlyThePaintedPatch) {
    const ProbingDataset ds =
        nemc::generate_synthetic_dataset(single("red", ConceptCategory::Color), 1, 32, 0);
    ASSERT_EQ(ds.n(), 1);
    std::int64_t painted = 0;
    for (std::int64_t y = 0; y < 32; ++y) {
        for (std::int64_t x = 0; x < 32; ++x) {
            const float r = ds.images.at4(0, 0, y, x);
            const float g = ds.images.at4(0, 1, y, x);
            const float b = ds.images.at4(0, 2, y, x);
            const bool grayBackground = (r == g && g == b);
            const bool masked = ds.mask_at(0, 0, y, x) != 0;
            EXPECT_EQ(masked, !grayBackground) << "pixel " << x << "," << y;
            painted += masked ? 1 : 0;
        }
    }
    EXPECT_GT(painted, 0);
    EXPECT_EQ(ds.labels[0], 0);
    EXPECT_NO_THROW(ds.validate());
}

TEST(Synthetic, SameSeedBitwiseIdenticalDifferentSeedNot) {
    const ConceptSet set = scenario::reference_concepts();
    const ProbingDataset a = nemc::generate_synthetic_dataset(set, 12, 32, 77);
    const ProbingDataset b = nemc::generate_synthetic_dataset(set, 12, 32, 77);
    EXPECT_EQ(a.images.storage(), b.images.storage());
    EXPECT_EQ(a.masks, b.masks);
    EXPECT_EQ(a.labels, b.labels);
    const ProbingDataset c = nemc::generate_synthetic_dataset(set, 12, 32, 78);
    EXPECT_NE(c.images.storage(), a.images.storage());
}

TEST(Synthetic, TooSmallImageRejected) {
    EXPECT_THROW(
        nemc::generate_synthetic_dataset(single("red", ConceptCategory::Color), 1, 8, 0),
        ConfigError);
    EXPECT_THROW(nemc::generate_synthetic_dataset(scenario::reference_concepts(), 0, 32, 0),
                 ConfigError);
}

TEST(Synthetic, UnknownConceptNameRejected) {
    EXPECT_THROW(
        nemc::generate_synthetic_dataset(single("plasma", ConceptCategory::Color), 1, 32, 0),
        ConfigError);
}

TEST(Synthetic, RegionsNeverOverlapAndEveryImageHasOneToThree) {
    const ConceptSet set = scenario::reference_concepts();
    const ProbingDataset ds = nemc::generate_synthetic_dataset(set, 120, 32, 5);
    for (std::int64_t i = 0; i < ds.n(); ++i) {
        std::int64_t regions = 0;
        for (std::int32_t c = 0; c < set.size(); ++c) {
            regions += ds.concept_present(i, c) ? 1 : 0;
        }
        ASSERT_GE(regions, 1) << "image " << i;
        ASSERT_LE(regions, 3) << "image " << i;
        for (std::int64_t y = 0; y < 32; ++y) {
            for (std::int64_t x = 0; x < 32; ++x) {
                int owners = 0;
                for (std::int32_t c = 0; c < set.size(); ++c) {
                    owners += ds.mask_at(i, c, y, x) != 0 ? 1 : 0;
                }
                ASSERT_LE(owners, 1) << "pixel " << x << "," << y << " image " << i;
            }
        }
    }
}

TEST(Synthetic, LabelIsTheDominantConceptByArea) {
    const ConceptSet set = scenario::reference_concepts();
    const ProbingDataset ds = nemc::generate_synthetic_dataset(set, 80, 32, 6);
    for (std::int64_t i = 0; i < ds.n(); ++i) {
        std::int64_t bestArea = -1;
        std::int32_t bestId = 0;
        for (std::int32_t c = 0; c < set.size(); ++c) {
            const std::int64_t area = ds.concept_area(i, c);
            if (area > bestArea) {
                bestArea = area;
                bestId = c;
            }
        }
        EXPECT_EQ(ds.labels[i], bestId) << "image " << i;
        // Multi-region images keep a strict dominance margin.
        for (std::int32_t c = 0; c < set.size(); ++c) {
            if (c == bestId || ds.concept_area(i, c) == 0) continue;
            EXPECT_GE(static_cast<double>(bestArea),
                      1.35 * static_cast<double>(ds.concept_area(i, c)))
                << "image " << i << " concept " << c;
        }
    }
}

TEST(Synthetic, LandmarkShapesAlwaysShareTheImageWithALargerPatch) {
    const ConceptSet set = scenario::reference_concepts();
    const ProbingDataset ds = nemc::generate_synthetic_dataset(set, 150, 32, 7);
    int landmarkImages = 0;
    for (std::int64_t i = 0; i < ds.n(); ++i) {
        for (std::int32_t c = 4; c < 8; ++c) {  // box, dot, sky, metal
            if (!ds.concept_present(i, c)) continue;
            ++landmarkImages;
            bool patchPresent = false;
            for (std::int32_t p = 0; p < 4 && !patchPresent; ++p) {
                patchPresent = ds.concept_present(i, p);
            }
            EXPECT_TRUE(patchPresent) << "image " << i;
            EXPECT_LT(ds.labels[i], 4) << "image " << i;
        }
    }
    EXPECT_GT(landmarkImages, 20);
}

TEST(Synthetic, EveryConceptAppearsInABigRun) {
    const ConceptSet set = scenario::reference_concepts();
    const ProbingDataset ds = nemc::generate_synthetic_dataset(set, 200, 32, 8);
    for (std::int32_t c = 0; c < set.size(); ++c) {
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < ds.n(); ++i) count += ds.concept_present(i, c) ? 1 : 0;
        EXPECT_GT(count, 4) << set.at(c).name;
    }
    EXPECT_NO_THROW(ds.validate());
}

TEST(Synthetic, PatternsAreBitwiseExactInsideRegions) {
    // Solid patches are one exact color; textured patches alternate between
    // exactly two values per channel.  This exactness is what lets a detector
    // channel respond with a single tied value across a whole concept.
    const ConceptSet set = scenario::reference_concepts();
    const ProbingDataset ds = nemc::generate_synthetic_dataset(set, 60, 32, 9);
    int redPixels = 0, brightStripe = 0, dimStripe = 0;
    for (std::int64_t i = 0; i < ds.n(); ++i) {
        for (std::int64_t y = 0; y < 32; ++y) {
            for (std::int64_t x = 0; x < 32; ++x) {
                if (ds.mask_at(i, 0, y, x)) {  // red patch: exactly the base color
                    EXPECT_EQ(ds.images.at4(i, 0, y, x), 0.85f);
                    EXPECT_EQ(ds.images.at4(i, 1, y, x), 0.10f);
                    EXPECT_EQ(ds.images.at4(i, 2, y, x), 0.10f);
                    ++redPixels;
                }
                if (ds.mask_at(i, 2, y, x)) {  // stripes: two exact phases
                    const float b = ds.images.at4(i, 2, y, x);
                    if (b == 0.20f) {
                        ++brightStripe;
                    } else {
                        EXPECT_EQ(b, 0.00f) << "image " << i << " " << x << "," << y;
                        ++dimStripe;
                    }
                }
            }
        }
    }
    EXPECT_GT(redPixels, 500);
    EXPECT_GT(brightStripe, 200);
    EXPECT_GT(dimStripe, 200);
}

}  // namespace
