#include "tgocr/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace tgocr {

namespace {

constexpr char kMagic[8] = {'T', 'G', 'O', 'C', 'R', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

using json = nlohmann::json;

std::uint32_t crc_table_entry(std::uint32_t i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    }
    return c;
}

} // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            t[i] = crc_table_entry(i);
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) {
        c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    }
    return c ^ 0xFFFFFFFFu;
}

namespace {

void append_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t parse_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_f32le(std::vector<std::uint8_t>& out, float v) {
    append_u32le(out, std::bit_cast<std::uint32_t>(v));
}

json layer_descriptor(const Layer<float>& layer) {
    json d;
    d["kind"] = layer.kind();
    if (layer.kind() == "dense") {
        const auto& dense = static_cast<const DenseLayer<float>&>(layer);
        d["in"] = dense.fan_in();
        d["out"] = dense.fan_out();
    } else if (layer.kind() == "conv") {
        const auto& conv = static_cast<const Conv2dLayer<float>&>(layer);
        d["in_channels"] = conv.in_channels();
        d["out_channels"] = conv.out_channels();
        d["kernel"] = json::array({conv.kernel(), conv.kernel()});
    } else if (layer.kind() == "dropout") {
        const auto& drop = static_cast<const DropoutLayer<float>&>(layer);
        d["rate"] = drop.rate();
    }
    return d;
}

std::unique_ptr<Layer<float>> layer_from_descriptor(const json& d, std::uint64_t seed,
                                                    std::size_t position) {
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "dense") {
        return std::make_unique<DenseLayer<float>>(d.at("in").get<index_t>(),
                                                   d.at("out").get<index_t>());
    }
    if (kind == "conv") {
        const auto kernel = d.at("kernel");
        if (!kernel.is_array() || kernel.size() != 2 || kernel[0] != kernel[1]) {
            throw CheckpointError("manifest: conv kernel must be square");
        }
        return std::make_unique<Conv2dLayer<float>>(d.at("in_channels").get<index_t>(),
                                                    d.at("out_channels").get<index_t>(),
                                                    kernel[0].get<index_t>());
    }
    if (kind == "maxpool") return std::make_unique<MaxPool2x2Layer<float>>();
    if (kind == "dropout") {
        return std::make_unique<DropoutLayer<float>>(d.at("rate").get<double>(),
                                                     derive_seed(seed, 100 + position));
    }
    if (kind == "flatten") return std::make_unique<FlattenLayer<float>>();
    if (kind == "relu") return std::make_unique<ReluLayer<float>>();
    if (kind == "softmax") return std::make_unique<SoftmaxLayer<float>>();
    throw CheckpointError("manifest: unknown layer kind \"" + kind + "\"");
}

} // namespace

void save_checkpoint(SequentialModel<float>& model, const std::filesystem::path& path) {
    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["architecture"] = model.tag();
    manifest["seed"] = model.seed();
    manifest["class_count"] = model.classes();
    manifest["input_shape"] = model.input_shape().dims();
    manifest["param_count"] = model.param_count();
    json layers = json::array();
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        layers.push_back(layer_descriptor(model.layer(i)));
    }
    manifest["layers"] = std::move(layers);
    const std::string manifest_text = manifest.dump();

    std::vector<std::uint8_t> bytes;
    bytes.insert(bytes.end(), kMagic, kMagic + sizeof(kMagic));
    append_u32le(bytes, static_cast<std::uint32_t>(manifest_text.size()));
    bytes.insert(bytes.end(), manifest_text.begin(), manifest_text.end());
    for (ParamSet<float>* ps : model.param_sets()) {
        for (float v : ps->weights.values()) {
            append_f32le(bytes, v);
        }
        for (float v : ps->bias.values()) {
            append_f32le(bytes, v);
        }
    }
    append_u32le(bytes, crc32(bytes.data(), bytes.size()));

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open checkpoint file for writing: " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("failed writing checkpoint " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("failed to move checkpoint into place: " + path.string() + ": " +
                      ec.message());
    }
}

SequentialModel<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint file " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + 4) {
        throw CheckpointError(path.string() + ": truncated header");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError(path.string() + ": bad magic bytes");
    }
    const std::uint32_t manifest_len = parse_u32le(bytes.data() + sizeof(kMagic));
    const std::size_t manifest_begin = sizeof(kMagic) + 4;
    if (bytes.size() < manifest_begin + manifest_len) {
        throw CheckpointError(path.string() + ": manifest truncated");
    }

    json manifest;
    try {
        manifest = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(manifest_begin),
                               bytes.begin() + static_cast<std::ptrdiff_t>(manifest_begin +
                                                                            manifest_len));
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": manifest: " + e.what());
    }

    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kFormatVersion) {
            throw CheckpointError(path.string() + ": unsupported format version " +
                                  std::to_string(version));
        }
        const auto tag = manifest.at("architecture").get<std::string>();
        const auto seed = manifest.at("seed").get<std::uint64_t>();
        const auto classes = manifest.at("class_count").get<int>();
        const auto input_dims = manifest.at("input_shape").get<std::vector<index_t>>();
        const auto declared_params = manifest.at("param_count").get<index_t>();

        std::vector<std::unique_ptr<Layer<float>>> layers;
        for (std::size_t i = 0; i < manifest.at("layers").size(); ++i) {
            layers.push_back(layer_from_descriptor(manifest["layers"][i], seed, i));
        }
        SequentialModel<float> model(tag, Shape(input_dims), classes, seed, std::move(layers));

        if (model.param_count() != declared_params) {
            throw CheckpointError(path.string() + ": manifest parameter count " +
                                  std::to_string(declared_params) + " does not match layers (" +
                                  std::to_string(model.param_count()) + ")");
        }

        const std::size_t tensors_begin = manifest_begin + manifest_len;
        const std::size_t tensor_bytes = static_cast<std::size_t>(declared_params) * 4;
        if (bytes.size() < tensors_begin + tensor_bytes + 4) {
            throw CheckpointError(path.string() + ": tensor data truncated");
        }
        if (bytes.size() > tensors_begin + tensor_bytes + 4) {
            throw CheckpointError(path.string() + ": trailing bytes after checksum");
        }

        const std::uint32_t stored_crc = parse_u32le(bytes.data() + bytes.size() - 4);
        if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
            throw CheckpointError(path.string() + ": checksum mismatch");
        }

        const std::uint8_t* cursor = bytes.data() + tensors_begin;
        for (ParamSet<float>* ps : model.param_sets()) {
            for (auto& v : ps->weights.values()) {
                v = std::bit_cast<float>(parse_u32le(cursor));
                cursor += 4;
            }
            for (auto& v : ps->bias.values()) {
                v = std::bit_cast<float>(parse_u32le(cursor));
                cursor += 4;
            }
        }
        return model;
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": manifest: " + e.what());
    } catch (const CheckpointError&) {
        throw;
    } catch (const Error& e) {
        // inconsistent layer list, bad shapes and the like
        throw CheckpointError(path.string() + ": manifest: " + e.what());
    }
}

} // namespace tgocr
