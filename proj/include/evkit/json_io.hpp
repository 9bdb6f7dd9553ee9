#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "evkit/errors.hpp"
#include "evkit/esa.hpp"
#include "evkit/stme.hpp"
#include "evkit/tensor.hpp"

// JSON debug forms. Tensors serialize as {"shape":[...], "data":[...]};
// parameter sets as {projections, conv, batchnorm, pool, sparsity}.

namespace evkit {

inline nlohmann::json tensor_to_json(const Tensor& t) {
    nlohmann::json j;
    j["shape"] = t.shape();
    j["data"] = std::vector<double>(t.data().begin(), t.data().end());
    return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    if (!j.contains("shape") || !j.contains("data")) {
        throw ParseError("tensor JSON needs \"shape\" and \"data\" fields");
    }
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

// STME block parameters plus the pooling head's 1x1 conv, one document.
struct StageParams {
    StmeParams stme;
    PoolParams pool;
};

inline nlohmann::json params_to_json(const StageParams& p) {
    nlohmann::json j;
    j["projections"]["wq_prev"] = tensor_to_json(p.stme.wq_prev);
    j["projections"]["wk_prev"] = tensor_to_json(p.stme.wk_prev);
    j["projections"]["wv_prev"] = tensor_to_json(p.stme.wv_prev);
    j["projections"]["wk_curr"] = tensor_to_json(p.stme.wk_curr);
    j["projections"]["wv_curr"] = tensor_to_json(p.stme.wv_curr);
    j["conv"]["weights"] = tensor_to_json(p.stme.conv_w);
    j["conv"]["bias"] = tensor_to_json(p.stme.conv_b);
    j["batchnorm"]["mean"] = tensor_to_json(p.stme.bn_mean);
    j["batchnorm"]["var"] = tensor_to_json(p.stme.bn_var);
    j["batchnorm"]["gamma"] = tensor_to_json(p.stme.bn_gamma);
    j["batchnorm"]["beta"] = tensor_to_json(p.stme.bn_beta);
    j["batchnorm"]["eps"] = p.stme.bn_eps;
    j["pool"]["weights"] = tensor_to_json(p.pool.conv_w);
    j["pool"]["bias"] = tensor_to_json(p.pool.conv_b);
    j["sparsity"]["fractions"] = p.stme.sparsity.fractions;
    j["sparsity"]["lambdas"] = p.stme.sparsity.lambdas;
    return j;
}

inline StageParams params_from_json(const nlohmann::json& j) {
    StageParams p;
    const auto& proj = j.at("projections");
    p.stme.wq_prev = tensor_from_json(proj.at("wq_prev"));
    p.stme.wk_prev = tensor_from_json(proj.at("wk_prev"));
    p.stme.wv_prev = tensor_from_json(proj.at("wv_prev"));
    p.stme.wk_curr = tensor_from_json(proj.at("wk_curr"));
    p.stme.wv_curr = tensor_from_json(proj.at("wv_curr"));
    p.stme.conv_w = tensor_from_json(j.at("conv").at("weights"));
    p.stme.conv_b = tensor_from_json(j.at("conv").at("bias"));
    const auto& bn = j.at("batchnorm");
    p.stme.bn_mean = tensor_from_json(bn.at("mean"));
    p.stme.bn_var = tensor_from_json(bn.at("var"));
    p.stme.bn_gamma = tensor_from_json(bn.at("gamma"));
    p.stme.bn_beta = tensor_from_json(bn.at("beta"));
    p.stme.bn_eps = bn.at("eps").get<double>();
    p.pool.conv_w = tensor_from_json(j.at("pool").at("weights"));
    p.pool.conv_b = tensor_from_json(j.at("pool").at("bias"));
    p.stme.sparsity.fractions = j.at("sparsity").at("fractions").get<std::vector<double>>();
    p.stme.sparsity.lambdas = j.at("sparsity").at("lambdas").get<std::vector<double>>();

    const std::int64_t channels = p.stme.wq_prev.rank() == 2 ? p.stme.wq_prev.extent(0) : 0;
    p.stme.validate(channels);
    p.pool.validate(channels);
    return p;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) {
        throw IoError("failed writing " + path.string());
    }
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void save_params(const std::filesystem::path& path, const StageParams& p) {
    write_text_file(path, params_to_json(p).dump(2) + "\n");
}

inline StageParams load_params(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return params_from_json(j);
}

}  // namespace evkit
