#pragma once

// Model checkpoint file.
//
// Layout:  "RYDC1" | u32 manifest length | JSON manifest | f64-LE blob | u32 CRC32
//
// The manifest lists the architecture, the training seed, and every
// parameter tensor (name + shape) in traversal order; the blob holds those
// tensors' values followed by the batch-norm running mean and variance.
// The CRC covers every preceding byte.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rydfdm/nn/network.hpp"
#include "rydfdm/util.hpp"

namespace rydfdm::nn {

inline const char* kCheckpointMagic = "RYDC1";

/// Parameter names in the exact order of for_each_param_matrix.
inline std::vector<std::string> param_names() {
    std::vector<std::string> names = {"conv.w", "conv.b", "bn.gamma", "bn.beta"};
    for (const char* dir : {"lstm_fwd", "lstm_bwd"})
        for (const char* p : {"w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o"})
            names.push_back(std::string(dir) + "." + p);
    names.push_back("dense.w");
    names.push_back("dense.b");
    return names;
}

/// A non-empty run_id is recorded in the manifest so the file can be traced
/// back to the producing run; readers ignore it.
inline void save_checkpoint(const NetworkState& s, const std::string& path,
                            std::uint64_t seed, const std::string& run_id = "") {
    nlohmann::json manifest;
    manifest["format"] = kCheckpointMagic;
    manifest["seed"] = seed;
    if (!run_id.empty()) manifest["run"] = run_id;
    manifest["net"] = {{"input_len", s.cfg.input_len},
                       {"conv_filters", s.cfg.conv_filters},
                       {"kernel_len", s.cfg.kernel_len},
                       {"pool_window", s.cfg.pool_window},
                       {"lstm_hidden", s.cfg.lstm_hidden},
                       {"n_bins", s.cfg.n_bins}};
    manifest["bn"] = {{"eps", s.bn.eps}, {"momentum", s.bn.momentum}};

    nlohmann::json layers = nlohmann::json::array();
    const std::vector<std::string> names = param_names();
    std::size_t k = 0;
    for_each_param_matrix(const_cast<NetworkState&>(s), [&](auto& m) {
        layers.push_back({{"name", names.at(k++)},
                          {"rows", m.rows()},
                          {"cols", m.cols()}});
    });
    layers.push_back({{"name", "bn.running_mean"},
                      {"rows", s.bn.running_mean.size()},
                      {"cols", 1}});
    layers.push_back({{"name", "bn.running_var"},
                      {"rows", s.bn.running_var.size()},
                      {"cols", 1}});
    manifest["layers"] = layers;

    std::string out = kCheckpointMagic;
    const std::string mtext = manifest.dump();
    put_u32(out, static_cast<std::uint32_t>(mtext.size()));
    out += mtext;

    for_each_param_matrix(const_cast<NetworkState&>(s), [&](auto& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
    });
    for (Eigen::Index i = 0; i < s.bn.running_mean.size(); ++i)
        put_f64(out, s.bn.running_mean[i]);
    for (Eigen::Index i = 0; i < s.bn.running_var.size(); ++i)
        put_f64(out, s.bn.running_var[i]);

    put_u32(out, crc32(out.data(), out.size()));
    write_file(path, out);
}

struct Checkpoint {
    NetworkState state;
    std::uint64_t seed = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    const std::string data = read_file(path);
    if (data.size() < 9 || data.compare(0, 5, kCheckpointMagic) != 0)
        throw std::runtime_error("malformed file: bad checkpoint magic in " + path);

    const std::uint32_t stored_crc =
        crc32(data.data(), data.size() - 4);
    ByteReader trailer(data, data.size() - 4);
    if (trailer.u32() != stored_crc)
        throw std::runtime_error("malformed file: checkpoint checksum mismatch in " +
                                 path);

    ByteReader r(data, 5);
    const std::uint32_t mlen = r.u32();
    const std::string mtext = r.bytes(mlen);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mtext);
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("malformed file: checkpoint manifest is not JSON");
    }

    NetConfig cfg;
    const auto& net = manifest.at("net");
    cfg.input_len = net.at("input_len").get<Eigen::Index>();
    cfg.conv_filters = net.at("conv_filters").get<Eigen::Index>();
    cfg.kernel_len = net.at("kernel_len").get<Eigen::Index>();
    cfg.pool_window = net.at("pool_window").get<Eigen::Index>();
    cfg.lstm_hidden = net.at("lstm_hidden").get<Eigen::Index>();
    cfg.n_bins = net.at("n_bins").get<Eigen::Index>();

    Checkpoint ck;
    ck.seed = manifest.at("seed").get<std::uint64_t>();
    Rng scratch(0);  // shapes only; values are overwritten from the blob
    ck.state = init_network(cfg, scratch);
    if (manifest.contains("bn")) {
        ck.state.bn.eps = manifest["bn"].at("eps").get<double>();
        ck.state.bn.momentum = manifest["bn"].at("momentum").get<double>();
    }

    for_each_param_matrix(ck.state, [&](auto& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    });
    for (Eigen::Index i = 0; i < ck.state.bn.running_mean.size(); ++i)
        ck.state.bn.running_mean[i] = r.f64();
    for (Eigen::Index i = 0; i < ck.state.bn.running_var.size(); ++i)
        ck.state.bn.running_var[i] = r.f64();

    if (r.remaining() != 4)
        throw std::runtime_error("malformed file: checkpoint has trailing bytes");
    return ck;
}

}  // namespace rydfdm::nn
