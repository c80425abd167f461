// Planted-model builder: validation, determinism, decoy behavior, detector
// fidelity under dissection, and classifier accuracy on generated data.

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nemc/dissection.hpp"
#include "nemc/model.hpp"
#include "nemc/planted.hpp"
#include "nemc/synthetic.hpp"
#include "scenario.hpp"

using namespace nemc;

namespace {

PlantSpec reference_plant(const ConceptSet& set) {
    PlantSpec plant;
    auto add = [&](const std::string& neuron, const std::string& name, DetectorKind kind) {
        plant.planted.push_back({neuron_from_string(neuron), set.id_of(name), kind});
    };
    // conv3 channel order doubles as the margin-band ladder (lowest band
    // first).  Sky reads as an oriented-edge detector: its color channels
    // nearly tie metal's bright phase up to a uniform gray shift, which a
    // zero-sum color filter cannot see, while its band boundary and the
    // image's top edge give it an unrivalled horizontal-edge profile.
    add("conv1:11", "red", DetectorKind::ColorMatchedFilter);
    add("conv1:12", "green", DetectorKind::ColorMatchedFilter);
    add("conv2:7", "stripes", DetectorKind::OrientedEdge);
    add("conv2:8", "checker", DetectorKind::TextureFrequency);
    add("conv3:4", "sky", DetectorKind::OrientedEdge);
    add("conv3:5", "box", DetectorKind::ColorMatchedFilter);
    add("conv3:6", "dot", DetectorKind::ColorMatchedFilter);
    add("conv3:7", "metal", DetectorKind::TextureFrequency);
    plant.decoy_channels = 2;
    plant.weight_noise = 0.05;
    return plant;
}

// One conv channel's incoming kernel plus its bias, for bitwise comparisons.
std::vector<float> channel_filter(const ModelSpec& m, const std::string& layer,
                                  std::int64_t ch) {
    const LayerOp& op = m.layer(layer);
    const auto& s = op.weights.shape();
    std::vector<float> out;
    for (std::int64_t ic = 0; ic < s[1]; ++ic) {
        for (std::int64_t ky = 0; ky < s[2]; ++ky) {
            for (std::int64_t kx = 0; kx < s[3]; ++kx) {
                out.push_back(op.weights.at4(ch, ic, ky, kx));
            }
        }
    }
    out.push_back(op.bias[ch]);
    return out;
}

// Expected channel layout of the reference build, fixed by the allocation
// rule (carriers take the lowest free slots, evidence channels follow at
// conv3, decoys fill whatever remains).
constexpr std::int64_t kReferenceDecoys[3][2] = {{14, 15}, {10, 11}, {8, 9}};

struct ReferenceRun {
    ProbingDataset ds;
    ModelSpec model;
    Dissection diss;
};

const ReferenceRun& reference_run() {
    static const ReferenceRun run = [] {
        ReferenceRun r;
        r.ds = generate_synthetic_dataset(scenario::reference_concepts(), scenario::kImages,
                                          scenario::kImageSize, scenario::kDatasetSeed);
        r.model = build_planted_model(r.ds.concepts, reference_plant(r.ds.concepts), 1);
        r.diss = dissect(r.model, r.ds, {"conv1", "conv2", "conv3"}, {});
        return r;
    }();
    return run;
}

}  // namespace

TEST(PlantValidationTest, RejectsStructurallyBadPlants) {
    const ConceptSet set = scenario::reference_concepts();
    auto build = [&](PlantSpec plant) { return build_planted_model(set, plant, 1); };
    auto one = [&](const std::string& neuron, std::int32_t id, DetectorKind kind) {
        PlantSpec p;
        p.planted.push_back({neuron_from_string(neuron), id, kind});
        return p;
    };

    EXPECT_THROW(build(one("relu1:0", 0, DetectorKind::ColorMatchedFilter)), ConfigError);
    EXPECT_THROW(build(one("conv9:0", 0, DetectorKind::ColorMatchedFilter)), ConfigError);
    EXPECT_THROW(build(one("conv1:0", 99, DetectorKind::ColorMatchedFilter)), ConfigError);
    EXPECT_THROW(build(one("conv1:0", 0, DetectorKind::OrientedEdge)), ConfigError);
    EXPECT_THROW(build(one("conv1:0", 0, DetectorKind::TextureFrequency)), ConfigError);

    PlantSpec dup = one("conv2:3", set.id_of("stripes"), DetectorKind::OrientedEdge);
    dup.planted.push_back(
        {neuron_from_string("conv2:3"), set.id_of("checker"), DetectorKind::TextureFrequency});
    EXPECT_THROW(build(dup), ConfigError);

    PlantSpec negDecoys = reference_plant(set);
    negDecoys.decoy_channels = -1;
    EXPECT_THROW(build(negDecoys), ConfigError);

    PlantSpec badNoise = reference_plant(set);
    badNoise.weight_noise = -0.5;
    EXPECT_THROW(build(badNoise), ConfigError);

    // A conv3-only plant of one detector with two decoys yields three conv3
    // channels, so channel 12 does not exist.
    try {
        build(one("conv3:12", set.id_of("box"), DetectorKind::ColorMatchedFilter));
        FAIL() << "expected ConfigError for an out-of-range planted channel";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("too few channels"), std::string::npos);
    }

    PlantSpec noRoom;
    noRoom.decoy_channels = 0;
    EXPECT_THROW(build(noRoom), ConfigError);  // zero channels everywhere
}

TEST(PlantValidationTest, JsonRoundTripPreservesEverySpecField) {
    const ConceptSet set = scenario::reference_concepts();
    const PlantSpec plant = reference_plant(set);

    const PlantSpec back = plant_spec_from_json(plant_spec_to_json(plant, set), set);
    ASSERT_EQ(back.planted.size(), plant.planted.size());
    for (std::size_t i = 0; i < plant.planted.size(); ++i) {
        EXPECT_EQ(back.planted[i].neuron, plant.planted[i].neuron);
        EXPECT_EQ(back.planted[i].concept_id, plant.planted[i].concept_id);
        EXPECT_EQ(back.planted[i].kind, plant.planted[i].kind);
    }
    EXPECT_EQ(back.decoy_channels, plant.decoy_channels);
    EXPECT_DOUBLE_EQ(back.weight_noise, plant.weight_noise);

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "nemc_plant_io_test";
    fs::create_directories(dir);
    const std::string path = (dir / "plant.json").string();
    save_plant_spec(plant, set, path);
    const PlantSpec loaded = load_plant_spec(path, set);
    EXPECT_EQ(loaded.planted.size(), plant.planted.size());
    EXPECT_EQ(loaded.decoy_channels, plant.decoy_channels);

    EXPECT_THROW(load_plant_spec((dir / "absent.json").string(), set), ConfigError);

    const std::string mangled = (dir / "mangled.json").string();
    std::ofstream(mangled) << "{not json";
    EXPECT_THROW(load_plant_spec(mangled, set), ConfigError);

    const std::string wrongConcept = (dir / "wrong_concept.json").string();
    std::ofstream(wrongConcept)
        << R"({"planted":[{"neuron":"conv1:0","concept":"plaid","kind":"color-matched-filter"}]})";
    EXPECT_THROW(load_plant_spec(wrongConcept, set), ConfigError);

    const std::string wrongKind = (dir / "wrong_kind.json").string();
    std::ofstream(wrongKind)
        << R"({"planted":[{"neuron":"conv1:0","concept":"red","kind":"fourier"}]})";
    EXPECT_THROW(load_plant_spec(wrongKind, set), ConfigError);

    const std::string wrongNeuron = (dir / "wrong_neuron.json").string();
    std::ofstream(wrongNeuron)
        << R"({"planted":[{"neuron":"conv1","concept":"red","kind":"color-matched-filter"}]})";
    EXPECT_THROW(load_plant_spec(wrongNeuron, set), ConfigError);

    fs::remove_all(dir);
}

TEST(PlantedBuildTest, SameSeedRebuildsBitwiseIdentically) {
    const ConceptSet set = scenario::reference_concepts();
    const PlantSpec plant = reference_plant(set);
    const ModelSpec a = build_planted_model(set, plant, 1);
    const ModelSpec b = build_planted_model(set, plant, 1);
    ASSERT_EQ(a.layers.size(), b.layers.size());
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        EXPECT_EQ(a.layers[i].weights.storage(), b.layers[i].weights.storage()) << i;
        EXPECT_EQ(a.layers[i].bias.storage(), b.layers[i].bias.storage()) << i;
    }
}

TEST(PlantedBuildTest, BuildSeedMovesOnlyTheDecoyFilters) {
    const ConceptSet set = scenario::reference_concepts();
    const PlantSpec plant = reference_plant(set);
    const ModelSpec a = build_planted_model(set, plant, 1);
    const ModelSpec b = build_planted_model(set, plant, 2);

    for (const auto& p : plant.planted) {
        EXPECT_EQ(channel_filter(a, p.neuron.layer, p.neuron.channel),
                  channel_filter(b, p.neuron.layer, p.neuron.channel))
            << "planted filter drifted with the build seed: " << p.neuron.to_string();
    }
    // Carriers (conv1 channel 0 is the red passthrough) and the head are
    // seed-independent too.
    EXPECT_EQ(channel_filter(a, "conv1", 0), channel_filter(b, "conv1", 0));
    EXPECT_EQ(a.layer("head").weights.storage(), b.layer("head").weights.storage());

    bool someDecoyDiffers = false;
    for (int layer = 0; layer < 3; ++layer) {
        const std::string name = "conv" + std::to_string(layer + 1);
        for (std::int64_t ch : kReferenceDecoys[layer]) {
            if (channel_filter(a, name, ch) != channel_filter(b, name, ch)) {
                someDecoyDiffers = true;
            }
        }
    }
    EXPECT_TRUE(someDecoyDiffers);
}

TEST(PlantedBuildTest, EmptyPlantYieldsDecoyOnlyModelBelowTheFloor) {
    const ConceptSet set = scenario::reference_concepts();
    PlantSpec empty;  // no detectors; default decoy count
    const ModelSpec model = build_planted_model(set, empty, 7);
    EXPECT_EQ(model.channel_count("conv1"), empty.decoy_channels);
    EXPECT_EQ(model.channel_count("conv2"), empty.decoy_channels);
    EXPECT_EQ(model.channel_count("conv3"), empty.decoy_channels);

    const ProbingDataset ds = generate_synthetic_dataset(set, 160, 32, 11);
    const Dissection diss = dissect(model, ds, {"conv1", "conv2", "conv3"}, {});
    for (const auto& reading : diss.result.neurons) {
        EXPECT_FALSE(reading.interpretable)
            << reading.neuron.to_string() << " matched concept "
            << (reading.concept_id ? set.at(*reading.concept_id).name : "?") << " at score "
            << reading.score;
    }
}

TEST(PlantedModelTest, DissectionRecoversEveryPlantedConcept) {
    const ReferenceRun& run = reference_run();
    const PlantSpec plant = reference_plant(run.ds.concepts);
    for (const auto& p : plant.planted) {
        const NeuronReading& r = run.diss.result.at(p.neuron);
        EXPECT_TRUE(r.interpretable) << p.neuron.to_string();
        ASSERT_TRUE(r.concept_id.has_value()) << p.neuron.to_string();
        EXPECT_EQ(*r.concept_id, p.concept_id)
            << p.neuron.to_string() << " read as "
            << run.ds.concepts.at(*r.concept_id).name << " (score " << r.score
            << ") instead of " << run.ds.concepts.at(p.concept_id).name;
    }
}

TEST(PlantedModelTest, EvidenceChannelsReadAsTheirShallowConcepts) {
    const ReferenceRun& run = reference_run();
    // Shallow-planted concepts, ascending by id, occupy the first free conv3
    // slots as evidence channels for the classifier head.
    const std::vector<std::pair<std::int64_t, std::string>> expected = {
        {0, "red"}, {1, "green"}, {2, "stripes"}, {3, "checker"}};
    for (const auto& [ch, name] : expected) {
        const NeuronReading& r = run.diss.result.at({"conv3", ch});
        EXPECT_TRUE(r.interpretable) << "conv3:" << ch;
        ASSERT_TRUE(r.concept_id.has_value());
        EXPECT_EQ(*r.concept_id, run.ds.concepts.id_of(name)) << "conv3:" << ch;
    }
}

TEST(PlantedModelTest, DecoyChannelsStayUninterpretable) {
    const ReferenceRun& run = reference_run();
    for (int layer = 0; layer < 3; ++layer) {
        const std::string name = "conv" + std::to_string(layer + 1);
        for (std::int64_t ch : kReferenceDecoys[layer]) {
            const NeuronReading& r = run.diss.result.at({name, ch});
            EXPECT_FALSE(r.interpretable)
                << name << ":" << ch << " scored " << r.score << " on "
                << (r.concept_id ? run.ds.concepts.at(*r.concept_id).name : "?");
        }
    }
}

TEST(PlantedModelTest, RedDetectorMaskCoversTheRedRegions) {
    const ReferenceRun& run = reference_run();
    const TensorU8& mask = run.diss.masks.at({"conv1", 11});
    const std::int64_t n = run.ds.images.dim(0), S = run.ds.images.dim(2);
    const std::int32_t red = run.ds.concepts.id_of("red");
    std::int64_t covered = 0, labeled = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::vector<std::uint8_t> label = run.ds.mask_plane(i, red);
        for (std::int64_t p = 0; p < S * S; ++p) {
            if (!label[static_cast<std::size_t>(p)]) continue;
            ++labeled;
            if (mask.data[static_cast<std::size_t>(i * S * S + p)]) ++covered;
        }
    }
    ASSERT_GT(labeled, 0);
    EXPECT_GE(static_cast<double>(covered) / static_cast<double>(labeled), 0.8);
}

TEST(PlantedModelTest, ClassifierTracksTheGeneratorLabels) {
    const ReferenceRun& run = reference_run();
    const double acc = classification_accuracy(run.model, run.ds.images, run.ds.labels);
    EXPECT_GE(acc, 0.95);
}

TEST(PlantedModelTest, SingleDeepColorPlantIsRecovered) {
    const ConceptSet set = scenario::reference_concepts();
    PlantSpec plant;
    plant.planted.push_back(
        {neuron_from_string("conv3:0"), set.id_of("red"), DetectorKind::ColorMatchedFilter});
    const ModelSpec model = build_planted_model(set, plant, 1);
    const ProbingDataset ds = generate_synthetic_dataset(set, 200, 32, 5);
    const Dissection diss = dissect(model, ds, {"conv3"}, {});
    const NeuronReading& r = diss.result.at({"conv3", 0});
    EXPECT_TRUE(r.interpretable);
    ASSERT_TRUE(r.concept_id.has_value());
    EXPECT_EQ(*r.concept_id, set.id_of("red"));
}
