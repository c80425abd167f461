#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nemc/errors.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

static_assert(std::endian::native == std::endian::little,
              "tensor bundles are little-endian; byte-swapped hosts are unsupported");

// Tensor bundle: a directory holding manifest.json plus flat binary files.
// The manifest lists {name, dtype, shape, file, byte_offset} per tensor;
// payloads are raw little-endian row-major bytes.  Round-trips are bit-exact.

namespace detail {
inline std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "f32" || dtype == "i32") return 4;
    if (dtype == "u8") return 1;
    throw IntegrityError("unknown_dtype", "unknown bundle dtype: " + dtype);
}
}  // namespace detail

class BundleWriter {
public:
    void add_f32(const std::string& name, const TensorF32& t) {
        add_raw(name, "f32", t.shape(), t.data(), static_cast<std::size_t>(t.size()) * 4);
    }

    void add_u8(const std::string& name, const TensorU8& t) {
        add_raw(name, "u8", t.shape, t.data.data(), t.data.size());
    }

    void add_i32(const std::string& name, const std::vector<std::int32_t>& v,
                 const std::vector<std::int64_t>& shape) {
        if (TensorF32::element_count(shape) != static_cast<std::int64_t>(v.size())) {
            throw ConfigError("i32 entry shape does not match value count");
        }
        add_raw(name, "i32", shape, v.data(), v.size() * 4);
    }

    // Writes manifest.json plus a single data.bin holding every payload.
    void write(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::ofstream bin(dir / "data.bin", std::ios::binary | std::ios::trunc);
        if (!bin) throw IntegrityError("io_error", "cannot write " + (dir / "data.bin").string());
        nlohmann::json entries = nlohmann::json::array();
        std::uint64_t offset = 0;
        for (const auto& e : entries_) {
            bin.write(reinterpret_cast<const char*>(e.bytes.data()),
                      static_cast<std::streamsize>(e.bytes.size()));
            nlohmann::json j;
            j["name"] = e.name;
            j["dtype"] = e.dtype;
            j["shape"] = e.shape;
            j["file"] = "data.bin";
            j["byte_offset"] = offset;
            entries.push_back(j);
            offset += e.bytes.size();
        }
        bin.close();
        nlohmann::json manifest;
        manifest["format"] = "nemc-tensor-bundle";
        manifest["version"] = 1;
        manifest["entries"] = entries;
        std::ofstream mf(dir / "manifest.json", std::ios::trunc);
        if (!mf) throw IntegrityError("io_error", "cannot write " + (dir / "manifest.json").string());
        mf << manifest.dump(2) << "\n";
    }

private:
    struct Entry {
        std::string name;
        std::string dtype;
        std::vector<std::int64_t> shape;
        std::vector<std::uint8_t> bytes;
    };

    void add_raw(const std::string& name, const std::string& dtype,
                 const std::vector<std::int64_t>& shape, const void* src, std::size_t n) {
        for (const auto& e : entries_) {
            if (e.name == name) throw ConfigError("duplicate bundle entry: " + name);
        }
        Entry e;
        e.name = name;
        e.dtype = dtype;
        e.shape = shape;
        e.bytes.resize(n);
        std::memcpy(e.bytes.data(), src, n);
        entries_.push_back(std::move(e));
    }

    std::vector<Entry> entries_;
};

class Bundle {
public:
    static Bundle load(const std::filesystem::path& dir) {
        Bundle b;
        b.dir_ = dir;
        const auto manifest_path = dir / "manifest.json";
        std::ifstream mf(manifest_path);
        if (!mf) {
            throw IntegrityError("missing_manifest", "no manifest.json in " + dir.string());
        }
        nlohmann::json manifest;
        try {
            mf >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw IntegrityError("bad_manifest", "unparsable manifest in " + dir.string() + ": " + e.what());
        }
        if (!manifest.contains("entries") || !manifest["entries"].is_array()) {
            throw IntegrityError("bad_manifest", "manifest lacks an entries array: " + dir.string());
        }
        for (const auto& j : manifest["entries"]) {
            Meta m;
            try {
                m.name = j.at("name").get<std::string>();
                m.dtype = j.at("dtype").get<std::string>();
                m.shape = j.at("shape").get<std::vector<std::int64_t>>();
                m.file = j.at("file").get<std::string>();
                m.byte_offset = j.at("byte_offset").get<std::uint64_t>();
            } catch (const nlohmann::json::exception& e) {
                throw IntegrityError("bad_manifest", std::string("malformed manifest entry: ") + e.what());
            }
            detail::dtype_size(m.dtype);  // validates dtype
            if (b.meta_.count(m.name)) {
                throw IntegrityError("bad_manifest", "duplicate manifest entry: " + m.name);
            }
            b.meta_.emplace(m.name, std::move(m));
        }
        return b;
    }

    bool has(const std::string& name) const { return meta_.count(name) != 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(meta_.size());
        for (const auto& [k, v] : meta_) out.push_back(k);
        return out;
    }

    const std::vector<std::int64_t>& shape(const std::string& name) const {
        return find(name).shape;
    }

    TensorF32 f32(const std::string& name) const {
        const Meta& m = find(name);
        expect_dtype(m, "f32");
        const auto bytes = read_payload(m);
        std::vector<float> vals(bytes.size() / 4);
        std::memcpy(vals.data(), bytes.data(), bytes.size());
        return TensorF32(m.shape, std::move(vals));
    }

    TensorU8 u8(const std::string& name) const {
        const Meta& m = find(name);
        expect_dtype(m, "u8");
        TensorU8 t;
        t.shape = m.shape;
        const auto bytes = read_payload(m);
        t.data.assign(bytes.begin(), bytes.end());
        return t;
    }

    std::vector<std::int32_t> i32(const std::string& name) const {
        const Meta& m = find(name);
        expect_dtype(m, "i32");
        const auto bytes = read_payload(m);
        std::vector<std::int32_t> vals(bytes.size() / 4);
        std::memcpy(vals.data(), bytes.data(), bytes.size());
        return vals;
    }

private:
    struct Meta {
        std::string name;
        std::string dtype;
        std::vector<std::int64_t> shape;
        std::string file;
        std::uint64_t byte_offset = 0;
    };

    const Meta& find(const std::string& name) const {
        auto it = meta_.find(name);
        if (it == meta_.end()) {
            throw IntegrityError("missing_tensor", "bundle has no tensor named " + name);
        }
        return it->second;
    }

    static void expect_dtype(const Meta& m, const std::string& want) {
        if (m.dtype != want) {
            throw IntegrityError("dtype_mismatch",
                                 "tensor " + m.name + " is " + m.dtype + ", expected " + want);
        }
    }

    std::vector<std::uint8_t> read_payload(const Meta& m) const {
        for (std::int64_t d : m.shape) {
            if (d <= 0) throw IntegrityError("bad_manifest", "non-positive dimension in " + m.name);
        }
        const std::uint64_t count = static_cast<std::uint64_t>(TensorF32::element_count(m.shape));
        const std::uint64_t n = count * detail::dtype_size(m.dtype);
        std::ifstream f(dir_ / m.file, std::ios::binary);
        if (!f) throw IntegrityError("missing_file", "bundle file missing: " + m.file);
        f.seekg(0, std::ios::end);
        const std::uint64_t file_size = static_cast<std::uint64_t>(f.tellg());
        if (m.byte_offset + n > file_size) {
            throw IntegrityError("truncated_data",
                                 "tensor " + m.name + " extends past the end of " + m.file);
        }
        f.seekg(static_cast<std::streamoff>(m.byte_offset));
        std::vector<std::uint8_t> bytes(n);
        f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
        if (!f) throw IntegrityError("io_error", "short read on " + m.file);
        return bytes;
    }

    std::filesystem::path dir_;
    std::map<std::string, Meta> meta_;
};

}  // namespace nemc
