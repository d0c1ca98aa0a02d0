#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "beaconopt/net.hpp"

namespace beaconopt {

// Self-describing binary tensor container:
//   magic "BOPT" | u32 version | u64 header length | header JSON | raw data.
// The header lists every tensor with its shape; data is column-major float64,
// little-endian regardless of host byte order.

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
    std::string name;
    Eigen::MatrixXd value;
};

struct TensorContainer {
    nlohmann::json meta;
    std::vector<NamedTensor> tensors;

    const Eigen::MatrixXd& get(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t.value;
        throw std::runtime_error("tensor container: missing tensor '" + name + "'");
    }

    bool has(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return true;
        return false;
    }

    void add(const std::string& name, const Eigen::MatrixXd& value) {
        tensors.push_back({name, value});
    }
};

namespace detail {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_doubles_le(std::ostream& out, const double* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &data[i], 8);
            write_u64_le(out, bits);
        }
    }
}

inline void read_doubles_le(std::istream& in, double* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t bits = read_u64_le(in);
            std::memcpy(&data[i], &bits, 8);
        }
    }
}

}  // namespace detail

inline void save_container(const TensorContainer& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write tensor file: " + path);

    nlohmann::json header;
    header["format_version"] = kContainerVersion;
    header["scalar"] = "float64";
    header["byte_order"] = "little";
    header["meta"] = c.meta;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : c.tensors)
        tensors.push_back({{"name", t.name},
                           {"rows", static_cast<std::int64_t>(t.value.rows())},
                           {"cols", static_cast<std::int64_t>(t.value.cols())}});
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    out.write("BOPT", 4);
    detail::write_u32_le(out, kContainerVersion);
    detail::write_u64_le(out, hs.size());
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& t : c.tensors)
        detail::write_doubles_le(out, t.value.data(), static_cast<std::size_t>(t.value.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline TensorContainer load_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open tensor file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "BOPT", 4) != 0)
        throw std::runtime_error("not a tensor container: " + path);
    const std::uint32_t version = detail::read_u32_le(in);
    if (version != kContainerVersion)
        throw std::runtime_error("unsupported container version in " + path);
    const std::uint64_t hlen = detail::read_u64_le(in);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("corrupt container header: ") + e.what());
    }
    if (header.value("scalar", "") != std::string("float64"))
        throw std::runtime_error("unsupported scalar type in " + path);

    TensorContainer c;
    c.meta = header.value("meta", nlohmann::json::object());
    for (const auto& tj : header.at("tensors")) {
        NamedTensor t;
        t.name = tj.at("name").get<std::string>();
        const auto rows = tj.at("rows").get<std::int64_t>();
        const auto cols = tj.at("cols").get<std::int64_t>();
        t.value.resize(rows, cols);
        detail::read_doubles_le(in, t.value.data(), static_cast<std::size_t>(t.value.size()));
        c.tensors.push_back(std::move(t));
    }
    if (!in) throw std::runtime_error("truncated tensor file: " + path);
    return c;
}

// --- NetConfig <-> JSON ----------------------------------------------------

inline nlohmann::json net_config_to_json(const NetConfig& c) {
    return {{"input_dim", c.input_dim},
            {"blocks", c.blocks},
            {"layers_per_block", c.layers_per_block},
            {"hidden_width", c.hidden_width},
            {"pool_group", c.pool_group},
            {"output_dim", c.output_dim},
            {"bn_epsilon", c.bn_epsilon},
            {"bn_momentum", c.bn_momentum}};
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.blocks = j.value("blocks", c.blocks);
    c.layers_per_block = j.value("layers_per_block", c.layers_per_block);
    c.hidden_width = j.value("hidden_width", c.hidden_width);
    c.pool_group = j.value("pool_group", c.pool_group);
    c.output_dim = j.value("output_dim", c.output_dim);
    c.bn_epsilon = j.value("bn_epsilon", c.bn_epsilon);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    validate_net_config(c);
    return c;
}

// --- NetParams <-> container -----------------------------------------------

inline TensorContainer net_to_container(const NetParams& p) {
    TensorContainer c;
    c.meta["net_config"] = net_config_to_json(p.cfg);
    for (std::size_t i = 0; i < p.fc.size(); ++i) {
        const std::string k = "fc" + std::to_string(i);
        c.add(k + ".W", p.fc[i].W);
        c.add(k + ".b", p.fc[i].b);
        c.add(k + ".vW", p.fc[i].vW);
        c.add(k + ".vb", p.fc[i].vb);
    }
    for (std::size_t i = 0; i < p.bn.size(); ++i) {
        const std::string k = "bn" + std::to_string(i);
        c.add(k + ".gamma", p.bn[i].gamma);
        c.add(k + ".beta", p.bn[i].beta);
        c.add(k + ".run_mean", p.bn[i].run_mean);
        c.add(k + ".run_var", p.bn[i].run_var);
        c.add(k + ".vgamma", p.bn[i].vgamma);
        c.add(k + ".vbeta", p.bn[i].vbeta);
    }
    return c;
}

inline NetParams net_from_container(const TensorContainer& c) {
    NetParams p;
    p.cfg = net_config_from_json(c.meta.at("net_config"));
    p.fc.resize(static_cast<std::size_t>(p.cfg.fc_count()));
    p.bn.resize(static_cast<std::size_t>(p.cfg.bn_count()));
    auto vec = [&](const std::string& name) -> Eigen::VectorXd {
        const Eigen::MatrixXd& m = c.get(name);
        if (m.cols() != 1) throw std::runtime_error("tensor '" + name + "' is not a vector");
        return m.col(0);
    };
    for (std::size_t i = 0; i < p.fc.size(); ++i) {
        const std::string k = "fc" + std::to_string(i);
        p.fc[i].W = c.get(k + ".W");
        p.fc[i].b = vec(k + ".b");
        p.fc[i].vW = c.get(k + ".vW");
        p.fc[i].vb = vec(k + ".vb");
        const int want_in = p.cfg.fc_in(static_cast<int>(i));
        const int want_out = p.cfg.fc_out(static_cast<int>(i));
        if (p.fc[i].W.rows() != want_out || p.fc[i].W.cols() != want_in)
            throw std::runtime_error("tensor '" + k + ".W' shape does not match the config");
    }
    for (std::size_t i = 0; i < p.bn.size(); ++i) {
        const std::string k = "bn" + std::to_string(i);
        p.bn[i].gamma = vec(k + ".gamma");
        p.bn[i].beta = vec(k + ".beta");
        p.bn[i].run_mean = vec(k + ".run_mean");
        p.bn[i].run_var = vec(k + ".run_var");
        p.bn[i].vgamma = vec(k + ".vgamma");
        p.bn[i].vbeta = vec(k + ".vbeta");
        if (p.bn[i].gamma.size() != p.cfg.hidden_width)
            throw std::runtime_error("tensor '" + k + "' width does not match the config");
    }
    return p;
}

inline void save_net(const NetParams& p, const std::string& path) {
    save_container(net_to_container(p), path);
}

inline NetParams load_net(const std::string& path) {
    return net_from_container(load_container(path));
}

}  // namespace beaconopt
