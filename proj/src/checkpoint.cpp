#include "sfea/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace sfea {
namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr char kEnhancerMagic[9] = "SFEACKPT";

}  // namespace

void write_blob(const std::string& path, const char magic[9], const std::vector<int>& header,
                std::span<const double> params) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    f.write(magic, 8);
    std::uint32_t version = kFormatVersion;
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    for (int v : header) {
        std::int32_t h = v;
        f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    }
    std::uint64_t count = params.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    f.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (!f) throw DataError("checkpoint write failed: " + path);
}

Blob read_blob(const std::string& path, const char magic[9], std::size_t header_ints) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char got[8];
    f.read(got, 8);
    if (!f || std::memcmp(got, magic, 8) != 0)
        throw DataError("checkpoint format: bad magic in " + path);
    std::uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!f || version != kFormatVersion)
        throw DataError("checkpoint format: unsupported version in " + path);

    Blob blob;
    blob.header.resize(header_ints);
    for (std::size_t i = 0; i < header_ints; ++i) {
        std::int32_t h = 0;
        f.read(reinterpret_cast<char*>(&h), sizeof(h));
        blob.header[i] = h;
    }
    std::uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!f) throw DataError("checkpoint format: truncated header in " + path);
    blob.params.resize(count);
    f.read(reinterpret_cast<char*>(blob.params.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw DataError("checkpoint format: truncated parameters in " + path);
    return blob;
}

void save_enhancer(const EnhancerModel& model, const CheckpointMeta& meta,
                   const std::string& path) {
    if (meta.stage != "source" && meta.stage != "adapted")
        throw ContractError("checkpoint stage must be 'source' or 'adapted', got '" + meta.stage + "'");
    write_blob(path, kEnhancerMagic,
               {model.depth, model.base_channels, model.num_classes},
               flatten_params(model.layers));

    nlohmann::json j{{"format_version", kFormatVersion},
                     {"depth", model.depth},
                     {"base_channels", model.base_channels},
                     {"num_classes", model.num_classes},
                     {"stage", meta.stage},
                     {"seed", meta.seed},
                     {"epoch", meta.epoch}};
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw DataError("cannot write checkpoint sidecar: " + path + ".json");
    side << j.dump(2) << "\n";
}

EnhancerModel load_enhancer(const std::string& path, CheckpointMeta* meta_out) {
    Blob blob = read_blob(path, kEnhancerMagic, 3);
    int depth = blob.header[0], base = blob.header[1], classes = blob.header[2];

    EnhancerModel model = EnhancerModel::init(depth, base, classes, 0);
    if (blob.params.size() != param_count(model.layers))
        throw DataError("checkpoint format: parameter count mismatch in " + path);
    set_params(model.layers, blob.params);

    std::ifstream side(path + ".json");
    if (!side) throw DataError("missing checkpoint sidecar: " + path + ".json");
    nlohmann::json j;
    try {
        side >> j;
    } catch (const nlohmann::json::exception&) {
        throw DataError("corrupt checkpoint sidecar: " + path + ".json");
    }
    CheckpointMeta meta;
    try {
        meta.format_version = j.at("format_version").get<int>();
        meta.stage = j.at("stage").get<std::string>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        meta.epoch = j.at("epoch").get<int>();
        if (j.at("depth").get<int>() != depth || j.at("base_channels").get<int>() != base ||
            j.at("num_classes").get<int>() != classes)
            throw DataError("checkpoint sidecar disagrees with archive: " + path);
    } catch (const nlohmann::json::exception&) {
        throw DataError("checkpoint sidecar missing fields: " + path + ".json");
    }
    if (meta.stage != "source" && meta.stage != "adapted")
        throw DataError("checkpoint sidecar has invalid stage tag: " + path + ".json");
    if (meta_out) *meta_out = meta;
    return model;
}

}  // namespace sfea
