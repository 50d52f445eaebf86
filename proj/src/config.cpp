#include "bpnn/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace bpnn {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw ConfigError(path + ": " + why);
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) fail(path + "." + it.key(), "unknown key");
    }
}

std::uint64_t get_uint(const json& obj, const char* key, std::uint64_t fallback,
                       const std::string& path) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned()) fail(path + "." + key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

std::uint64_t require_uint(const json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) fail(path + "." + key, "missing required key");
    return get_uint(obj, key, 0, path);
}

double get_double(const json& obj, const char* key, double fallback, const std::string& path) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

std::string get_string(const json& obj, const char* key, const std::string& fallback,
                       const std::string& path) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

OptimizerConfig parse_optimizer_obj(const json& obj, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    reject_unknown(obj, {"kind", "lr", "beta1", "beta2", "rho", "lambda"}, path);
    OptimizerConfig cfg;
    try {
        cfg.kind = parse_optimizer(get_string(obj, "kind", "adam", path));
    } catch (const ValueError& e) {
        fail(path + ".kind", e.what());
    }
    cfg.lr = get_double(obj, "lr", cfg.lr, path);
    cfg.beta1 = get_double(obj, "beta1", cfg.beta1, path);
    cfg.beta2 = get_double(obj, "beta2", cfg.beta2, path);
    cfg.rho = get_double(obj, "rho", cfg.rho, path);
    cfg.lambda = get_double(obj, "lambda", cfg.lambda, path);
    if (cfg.lr <= 0.0) fail(path + ".lr", "learning rate must be positive");
    if (cfg.lambda < 0.0) fail(path + ".lambda", "weight decay must be non-negative");
    return cfg;
}

const std::set<std::string> kPlainTypes = {"relu",    "sigmoid", "tanh", "maxpool",
                                           "gap",     "flatten", "softmax"};

LayerConfig parse_layer(const json& obj, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    LayerConfig lc;
    lc.type = get_string(obj, "type", "", path);
    if (lc.type.empty()) fail(path + ".type", "missing required key");

    std::set<std::string> allowed = {"type", "projection", "alpha"};
    if (lc.type == "dense") {
        allowed.insert({"in", "out", "activation"});
    } else if (lc.type == "conv2d") {
        allowed.insert({"in_channels", "out_channels", "kernel", "stride", "padding",
                        "activation"});
    } else if (lc.type == "embedding") {
        allowed.insert({"vocab", "dim"});
    } else if (lc.type == "lstm") {
        allowed.insert({"in", "hidden"});
    } else if (!kPlainTypes.count(lc.type)) {
        fail(path + ".type", "unknown layer type '" + lc.type + "'");
    }
    reject_unknown(obj, allowed, path);

    const std::string proj = get_string(obj, "projection", "full", path);
    if (proj == "full") lc.projection = ProjectionMode::full;
    else if (proj == "bilinear") lc.projection = ProjectionMode::bilinear;
    else fail(path + ".projection", "expected full|bilinear");

    lc.alpha = get_uint(obj, "alpha", 1, path);
    if (lc.alpha < 1) fail(path + ".alpha", "alpha must be >= 1");

    if (lc.type == "dense") {
        lc.in = require_uint(obj, "in", path);
        lc.out = require_uint(obj, "out", path);
        try {
            lc.activation = parse_activation(get_string(obj, "activation", "identity", path));
        } catch (const ValueError& e) {
            fail(path + ".activation", e.what());
        }
    } else if (lc.type == "conv2d") {
        lc.in_channels = require_uint(obj, "in_channels", path);
        lc.out_channels = require_uint(obj, "out_channels", path);
        if (!obj.contains("kernel")) fail(path + ".kernel", "missing required key");
        const json& k = obj.at("kernel");
        if (k.is_number_unsigned()) {
            lc.kernel_h = lc.kernel_w = k.get<std::size_t>();
        } else if (k.is_array() && k.size() == 2 && k[0].is_number_unsigned() &&
                   k[1].is_number_unsigned()) {
            lc.kernel_h = k[0].get<std::size_t>();
            lc.kernel_w = k[1].get<std::size_t>();
        } else {
            fail(path + ".kernel", "expected an integer or [h, w] pair");
        }
        lc.stride = get_uint(obj, "stride", 1, path);
        try {
            lc.padding = parse_padding(get_string(obj, "padding", "valid", path));
            lc.activation = parse_activation(get_string(obj, "activation", "identity", path));
        } catch (const ValueError& e) {
            fail(path, e.what());
        }
    } else if (lc.type == "embedding") {
        lc.vocab = require_uint(obj, "vocab", path);
        lc.dim = require_uint(obj, "dim", path);
    } else if (lc.type == "lstm") {
        lc.in = require_uint(obj, "in", path);
        lc.hidden = require_uint(obj, "hidden", path);
    }
    return lc;
}

std::vector<LayerConfig> parse_layers(const json& arr, const std::string& path) {
    if (!arr.is_array()) fail(path, "expected an array");
    if (arr.empty()) fail(path, "at least one layer is required");
    std::vector<LayerConfig> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back(parse_layer(arr[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

json layer_to_json(const LayerConfig& lc) {
    json o;
    o["type"] = lc.type;
    if (kPlainTypes.count(lc.type)) return o;
    o["projection"] = projection_mode_name(lc.projection);
    o["alpha"] = lc.alpha;
    if (lc.type == "dense") {
        o["in"] = lc.in;
        o["out"] = lc.out;
        o["activation"] = activation_name(lc.activation);
    } else if (lc.type == "conv2d") {
        o["in_channels"] = lc.in_channels;
        o["out_channels"] = lc.out_channels;
        o["kernel"] = {lc.kernel_h, lc.kernel_w};
        o["stride"] = lc.stride;
        o["padding"] = lc.padding == Padding::valid ? "valid" : "same";
        o["activation"] = activation_name(lc.activation);
    } else if (lc.type == "embedding") {
        o["vocab"] = lc.vocab;
        o["dim"] = lc.dim;
    } else if (lc.type == "lstm") {
        o["in"] = lc.in;
        o["hidden"] = lc.hidden;
    }
    return o;
}

}  // namespace

ModelConfig parse_model_config(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
    reject_unknown(doc, {"seed", "loss", "optimizer", "batch_size", "epochs", "layers"},
                   "config");
    ModelConfig cfg;
    cfg.seed = get_uint(doc, "seed", cfg.seed, "config");
    try {
        cfg.loss = parse_loss(get_string(doc, "loss", "cross_entropy", "config"));
    } catch (const ValueError& e) {
        fail("config.loss", e.what());
    }
    if (doc.contains("optimizer")) {
        cfg.optimizer = parse_optimizer_obj(doc.at("optimizer"), "config.optimizer");
    }
    cfg.batch_size = get_uint(doc, "batch_size", cfg.batch_size, "config");
    if (cfg.batch_size < 1) fail("config.batch_size", "must be >= 1");
    cfg.epochs = get_uint(doc, "epochs", cfg.epochs, "config");
    if (!doc.contains("layers")) fail("config.layers", "missing required key");
    cfg.layers = parse_layers(doc.at("layers"), "config.layers");
    return cfg;
}

ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
    }
    return parse_model_config(doc);
}

nlohmann::json architecture_to_json(const ModelConfig& cfg) {
    json doc;
    doc["seed"] = cfg.seed;
    doc["loss"] = loss_name(cfg.loss);
    json arr = json::array();
    for (const LayerConfig& lc : cfg.layers) arr.push_back(layer_to_json(lc));
    doc["layers"] = std::move(arr);
    return doc;
}

ModelConfig parse_architecture(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("architecture: expected a JSON object");
    reject_unknown(doc, {"seed", "loss", "layers"}, "architecture");
    ModelConfig cfg;
    cfg.seed = get_uint(doc, "seed", cfg.seed, "architecture");
    try {
        cfg.loss = parse_loss(get_string(doc, "loss", "cross_entropy", "architecture"));
    } catch (const ValueError& e) {
        fail("architecture.loss", e.what());
    }
    if (!doc.contains("layers")) fail("architecture.layers", "missing required key");
    cfg.layers = parse_layers(doc.at("layers"), "architecture.layers");
    return cfg;
}

}  // namespace bpnn
