#pragma once

// Binary weight file, little-endian:
//   "TGDW" | u32 version | i32 depth, channels, input_slices | u32 tag length, tag bytes
//   u32 layer count | per layer: u32 out, u32 in, u32 has_bias, u32 has_bn, f32 momentum, f32 epsilon
//   then per layer, in order: weights, bias?, gamma?, beta?, running_mean?, running_var? as raw f32.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgd/network.hpp"

namespace tgd {

static_assert(std::endian::native == std::endian::little, "weight files are written in host byte order");

inline constexpr char kWeightMagic[4] = {'T', 'G', 'D', 'W'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

class FormatError : public std::runtime_error {
public:
    enum class Kind { io, bad_magic, bad_version, truncated, shape_mismatch };

    FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

namespace detail {

class ByteWriter {
public:
    template <class V>
    void put(const V& v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(V));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const char*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    template <class V>
    V get(const char* what) {
        V v;
        get_bytes(&v, sizeof(V), what);
        return v;
    }
    void get_bytes(void* out, std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(FormatError::Kind::truncated, std::string("weight file truncated while reading ") + what);
        }
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

struct LayerHeader {
    std::uint32_t out, in, has_bias, has_bn;
    float momentum, epsilon;
};

}  // namespace detail

inline std::vector<char> serialize_weights(const Network<float>& net) {
    detail::ByteWriter w;
    w.put_bytes(kWeightMagic, 4);
    w.put(kWeightFormatVersion);
    w.put(static_cast<std::int32_t>(net.config.depth));
    w.put(static_cast<std::int32_t>(net.config.channels));
    w.put(static_cast<std::int32_t>(net.config.input_slices));
    w.put(static_cast<std::uint32_t>(net.version_tag.size()));
    w.put_bytes(net.version_tag.data(), net.version_tag.size());
    w.put(static_cast<std::uint32_t>(net.blocks.size()));
    for (const auto& b : net.blocks) {
        w.put(static_cast<std::uint32_t>(b.conv.out_channels()));
        w.put(static_cast<std::uint32_t>(b.conv.in_channels()));
        w.put(static_cast<std::uint32_t>(b.conv.has_bias()));
        w.put(static_cast<std::uint32_t>(b.bn.has_value()));
        w.put(b.bn ? b.bn->momentum : 0.0f);
        w.put(b.bn ? b.bn->epsilon : 0.0f);
    }
    auto put_tensor = [&](const Tensor<float>& t) { w.put_bytes(t.data(), t.size() * sizeof(float)); };
    for (const auto& b : net.blocks) {
        put_tensor(b.conv.weights);
        put_tensor(b.conv.bias);
        if (b.bn) {
            put_tensor(b.bn->gamma);
            put_tensor(b.bn->beta);
            put_tensor(b.bn->running_mean);
            put_tensor(b.bn->running_var);
        }
    }
    return w.bytes();
}

/// Parses a weight file image. When `expected` is given, every layer shape must
/// match that config; the first mismatching layer is named in the diagnostic.
inline Network<float> deserialize_weights(std::vector<char> bytes, const NetworkConfig* expected = nullptr) {
    detail::ByteReader r(std::move(bytes));
    char magic[4];
    r.get_bytes(magic, 4, "magic");
    if (std::memcmp(magic, kWeightMagic, 4) != 0) throw FormatError(FormatError::Kind::bad_magic, "bad magic");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kWeightFormatVersion) {
        throw FormatError(FormatError::Kind::bad_version, "unsupported weight format version " + std::to_string(version));
    }
    Network<float> net;
    net.config.depth = r.get<std::int32_t>("config");
    net.config.channels = r.get<std::int32_t>("config");
    net.config.input_slices = r.get<std::int32_t>("config");
    const auto tag_len = r.get<std::uint32_t>("version tag");
    if (tag_len > r.remaining()) throw FormatError(FormatError::Kind::truncated, "weight file truncated in version tag");
    net.version_tag.resize(tag_len);
    r.get_bytes(net.version_tag.data(), tag_len, "version tag");

    const auto layers = r.get<std::uint32_t>("layer count");
    if (layers != static_cast<std::uint32_t>(net.config.depth)) {
        throw FormatError(FormatError::Kind::shape_mismatch, "layer count " + std::to_string(layers) +
                                                                 " disagrees with stored depth " +
                                                                 std::to_string(net.config.depth));
    }
    try {
        net.config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(FormatError::Kind::shape_mismatch, std::string("stored config invalid: ") + e.what());
    }

    std::vector<detail::LayerHeader> headers(layers);
    for (auto& h : headers) {
        h.out = r.get<std::uint32_t>("shape table");
        h.in = r.get<std::uint32_t>("shape table");
        h.has_bias = r.get<std::uint32_t>("shape table");
        h.has_bn = r.get<std::uint32_t>("shape table");
        h.momentum = r.get<float>("shape table");
        h.epsilon = r.get<float>("shape table");
    }

    const NetworkConfig& shape_cfg = expected ? *expected : net.config;
    for (std::size_t i = 0; i < headers.size(); ++i) {
        const auto& h = headers[i];
        const bool in_range = i < static_cast<std::size_t>(shape_cfg.depth);
        const std::size_t want_out = in_range ? layer_out_channels(shape_cfg, i) : 0;
        const std::size_t want_in = in_range ? layer_in_channels(shape_cfg, i) : 0;
        const bool want_bn = in_range && layer_has_bn(shape_cfg, i);
        if (!in_range || h.out != want_out || h.in != want_in || (h.has_bn != 0) != want_bn ||
            (h.has_bias != 0) == want_bn) {
            std::ostringstream os;
            os << "shape mismatch at layer " << i << ": file has [" << h.out << ',' << h.in << ",3,3]"
               << (h.has_bn ? "+bn" : "");
            if (in_range) {
                os << ", expected [" << want_out << ',' << want_in << ",3,3]" << (want_bn ? "+bn" : "");
            } else {
                os << ", expected network has only " << shape_cfg.depth << " layers";
            }
            throw FormatError(FormatError::Kind::shape_mismatch, os.str());
        }
    }
    if (expected && static_cast<std::size_t>(expected->depth) != headers.size()) {
        throw FormatError(FormatError::Kind::shape_mismatch,
                          "shape mismatch at layer " + std::to_string(headers.size()) + ": file has " +
                              std::to_string(headers.size()) + " layers, expected " + std::to_string(expected->depth));
    }

    auto get_tensor = [&](Shape shape, const char* what) {
        Tensor<float> t(std::move(shape));
        r.get_bytes(t.data(), t.size() * sizeof(float), what);
        return t;
    };
    for (const auto& h : headers) {
        ConvBlock<float> b;
        b.conv.weights = get_tensor({h.out, h.in, kKernelSize, kKernelSize}, "weights");
        if (h.has_bias) b.conv.bias = get_tensor({h.out}, "bias");
        if (h.has_bn) {
            BatchNormParams<float> bn;
            bn.gamma = get_tensor({h.out}, "gamma");
            bn.beta = get_tensor({h.out}, "beta");
            bn.running_mean = get_tensor({h.out}, "running mean");
            bn.running_var = get_tensor({h.out}, "running variance");
            bn.momentum = h.momentum;
            bn.epsilon = h.epsilon;
            b.bn = std::move(bn);
        }
        net.blocks.push_back(std::move(b));
    }
    for (std::size_t i = 0; i < net.blocks.size(); ++i) net.blocks[i].relu = i + 1 < net.blocks.size();
    if (r.remaining() != 0) {
        throw FormatError(FormatError::Kind::truncated,
                          "weight file has " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return net;
}

inline void save_weights(const Network<float>& net, const std::string& path) {
    const auto bytes = serialize_weights(net);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatError::Kind::io, "failed writing " + path);
}

inline std::vector<char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Network<float> load_weights(const std::string& path, const NetworkConfig* expected = nullptr) {
    return deserialize_weights(read_file_bytes(path), expected);
}

}  // namespace tgd
