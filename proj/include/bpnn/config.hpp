#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bpnn/activation.hpp"
#include "bpnn/layer.hpp"
#include "bpnn/layers.hpp"
#include "bpnn/loss.hpp"
#include "bpnn/optimizer.hpp"

namespace bpnn {

/// One layer entry of the architecture document. Only the fields relevant to
/// `type` are meaningful; the parser rejects keys a type does not declare.
struct LayerConfig {
    std::string type;
    ProjectionMode projection = ProjectionMode::full;
    std::size_t alpha = 1;
    Activation activation = Activation::identity;
    std::size_t in = 0, out = 0;                  // dense
    std::size_t in_channels = 0, out_channels = 0;  // conv2d
    std::size_t kernel_h = 0, kernel_w = 0, stride = 1;
    Padding padding = Padding::valid;
    std::size_t vocab = 0, dim = 0;  // embedding
    std::size_t hidden = 0;          // lstm (paired with `in`)
};

struct ModelConfig {
    std::uint64_t seed = 42;
    LossKind loss = LossKind::cross_entropy;
    OptimizerConfig optimizer;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    std::vector<LayerConfig> layers;
};

/// Parses and schema-validates a config document. Unknown keys, wrong types
/// and out-of-range values raise ConfigError naming the offending path.
ModelConfig parse_model_config(const nlohmann::json& doc);
ModelConfig load_model_config(const std::string& path);

/// Architecture subset (seed, loss, layers) as a canonical JSON document;
/// embedded in model files and reparsed on load.
nlohmann::json architecture_to_json(const ModelConfig& cfg);
ModelConfig parse_architecture(const nlohmann::json& doc);

}  // namespace bpnn
