#include "imle/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace imle {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void save_checkpoint(const ParamList& params, const std::string& prefix) {
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + prefix + ".bin");
    nlohmann::json manifest = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& p : params) {
        const auto& d = p.tensor.data();
        bin.write(reinterpret_cast<const char*>(d.data()),
                  static_cast<std::streamsize>(d.size() * sizeof(float)));
        manifest.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
        offset += d.size() * sizeof(float);
    }
    std::ofstream side(prefix + ".json");
    side << manifest.dump(2) << "\n";
}

void load_checkpoint(ParamList& params, const std::string& prefix) {
    std::ifstream side(prefix + ".json");
    if (!side) throw std::runtime_error("load_checkpoint: missing sidecar " + prefix + ".json");
    nlohmann::json manifest = nlohmann::json::parse(side);
    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("load_checkpoint: missing buffer " + prefix + ".bin");

    if (manifest.size() != params.size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& entry = manifest[i];
        if (entry.at("name").get<std::string>() != params[i].name)
            throw std::runtime_error("load_checkpoint: name mismatch at index " +
                                     std::to_string(i) + ": " +
                                     entry.at("name").get<std::string>() + " vs " +
                                     params[i].name);
        Shape shape = entry.at("shape").get<Shape>();
        if (shape != params[i].tensor.shape())
            throw std::runtime_error("load_checkpoint: shape mismatch for " + params[i].name);
        auto& d = params[i].tensor.data();
        bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<size_t>()));
        bin.read(reinterpret_cast<char*>(d.data()),
                 static_cast<std::streamsize>(d.size() * sizeof(float)));
        if (!bin) throw std::runtime_error("load_checkpoint: truncated buffer at " + params[i].name);
    }
}

} // namespace imle
