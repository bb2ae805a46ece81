#pragma once

#include <cstdint>
#include <string>

#include "dynclass/types.hpp"

namespace dynclass {

struct ModelMetadata {
    std::uint64_t seed = 0;
    std::uint64_t fit_config_hash = 0;
    std::string version = "1";
};

std::string model_to_json(const ModelParams& params, const ModelMetadata& meta = {});
ModelParams model_from_json(const std::string& text, ModelMetadata* meta = nullptr);

void save_model(const ModelParams& params, const std::string& path,
                const ModelMetadata& meta = {});
ModelParams load_model(const std::string& path, ModelMetadata* meta = nullptr);

}  // namespace dynclass
