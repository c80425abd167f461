#pragma once

// Concept vocabulary: ordered (id, name, category) triples with dense ids.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nemc/errors.hpp"

namespace nemc {

enum class ConceptCategory { Color, Texture, Object, Part, Scene, Material };

inline const char* category_name(ConceptCategory c) {
    switch (c) {
        case ConceptCategory::Color: return "color";
        case ConceptCategory::Texture: return "texture";
        case ConceptCategory::Object: return "object";
        case ConceptCategory::Part: return "part";
        case ConceptCategory::Scene: return "scene";
        case ConceptCategory::Material: return "material";
    }
    throw ConfigError("bad concept category value");
}

inline ConceptCategory category_from_name(const std::string& s) {
    if (s == "color") return ConceptCategory::Color;
    if (s == "texture") return ConceptCategory::Texture;
    if (s == "object") return ConceptCategory::Object;
    if (s == "part") return ConceptCategory::Part;
    if (s == "scene") return ConceptCategory::Scene;
    if (s == "material") return ConceptCategory::Material;
    throw ConfigError("unknown concept category: " + s);
}

struct Concept {
    std::int32_t id = 0;
    std::string name;
    ConceptCategory category = ConceptCategory::Color;
};

struct ConceptSet {
    std::vector<Concept> concepts;

    std::int64_t size() const { return static_cast<std::int64_t>(concepts.size()); }

    void validate() const {
        if (concepts.empty()) throw ConfigError("concept set is empty");
        for (std::size_t i = 0; i < concepts.size(); ++i) {
            if (concepts[i].id != static_cast<std::int32_t>(i)) {
                throw ConfigError("concept ids must be dense 0..K-1; slot " + std::to_string(i) +
                                  " has id " + std::to_string(concepts[i].id));
            }
            for (std::size_t j = 0; j < i; ++j) {
                if (concepts[j].name == concepts[i].name) {
                    throw ConfigError("duplicate concept name: " + concepts[i].name);
                }
            }
        }
    }

    bool has(const std::string& name) const {
        for (const auto& c : concepts)
            if (c.name == name) return true;
        return false;
    }

    std::int32_t id_of(const std::string& name) const {
        for (const auto& c : concepts)
            if (c.name == name) return c.id;
        throw ConfigError("unknown concept name: " + name);
    }

    const Concept& at(std::int32_t id) const {
        if (id < 0 || id >= size()) {
            throw ConfigError("concept id out of range: " + std::to_string(id));
        }
        return concepts[static_cast<std::size_t>(id)];
    }
};

inline nlohmann::json concept_set_to_json(const ConceptSet& set) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : set.concepts) {
        arr.push_back({{"id", c.id}, {"name", c.name}, {"category", category_name(c.category)}});
    }
    return nlohmann::json{{"concepts", arr}};
}

// Throws ConfigError on any structural problem; callers loading trusted
// artifacts wrap this and rethrow as an integrity error.
inline ConceptSet concept_set_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("concepts") || !j["concepts"].is_array()) {
        throw ConfigError("concept file must be an object with a \"concepts\" array");
    }
    ConceptSet set;
    for (const auto& e : j["concepts"]) {
        if (!e.is_object() || !e.contains("id") || !e.contains("name") ||
            !e.contains("category") || !e["id"].is_number_integer() || !e["name"].is_string() ||
            !e["category"].is_string()) {
            throw ConfigError("each concept needs integer id, string name, string category");
        }
        Concept c;
        c.id = e["id"].get<std::int32_t>();
        c.name = e["name"].get<std::string>();
        c.category = category_from_name(e["category"].get<std::string>());
        set.concepts.push_back(std::move(c));
    }
    set.validate();
    return set;
}

inline void save_concept_set(const ConceptSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write concept file: " + path);
    out << concept_set_to_json(set).dump(2) << "\n";
}

inline ConceptSet load_concept_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read concept file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("concept file is not valid JSON: " + std::string(e.what()));
    }
    return concept_set_from_json(j);
}

}  // namespace nemc
