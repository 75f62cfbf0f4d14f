#include "deformcast/model.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace deformcast {

namespace {

constexpr char kMagic[8] = {'D', 'F', 'C', 'K', 'P', 'T', '0', '1'};

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"hidden", c.hidden},
            {"tag_hops", c.tag_hops},
            {"encoder_layers", c.encoder_layers},
            {"decoder_layers", c.decoder_layers},
            {"heads", c.heads},
            {"num_frequencies", c.num_frequencies}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden = j.at("hidden").get<int>();
    c.tag_hops = j.at("tag_hops").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.num_frequencies = j.at("num_frequencies").get<int>();
    return c;
}

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    return nlohmann::json::parse(header);
}

}  // namespace

namespace {

CheckpointInfo info_from_header(const nlohmann::json& j) {
    CheckpointInfo info;
    info.config = config_from_json(j.at("config"));
    info.seed = j.at("seed").get<std::uint64_t>();
    info.dtype = j.at("dtype").get<std::string>();
    info.patch_size = j.value("patch_size", -1);
    info.ablation = j.value("ablation", std::string("both"));
    return info;
}

}  // namespace

CheckpointInfo peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    return info_from_header(read_header(in, path));
}

namespace detail {

void write_checkpoint_file(const std::string& path, const CheckpointInfo& info,
                           std::size_t scalar_size,
                           const std::vector<std::pair<std::string, const void*>>& blocks,
                           const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes) {
    nlohmann::json header;
    header["dtype"] = info.dtype;
    header["seed"] = info.seed;
    header["config"] = config_to_json(info.config);
    header["patch_size"] = info.patch_size;
    header["ablation"] = info.ablation;
    nlohmann::json jblocks = nlohmann::json::array();
    for (std::size_t i = 0; i < blocks.size(); ++i)
        jblocks.push_back({{"name", blocks[i].first},
                           {"rows", shapes[i].first},
                           {"cols", shapes[i].second}});
    header["blocks"] = jblocks;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    const std::uint64_t len = hs.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::size_t bytes =
            static_cast<std::size_t>(shapes[i].first * shapes[i].second) * scalar_size;
        out.write(static_cast<const char*>(blocks[i].second),
                  static_cast<std::streamsize>(bytes));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void read_checkpoint_file(const std::string& path, const char* want_dtype,
                          std::size_t scalar_size, CheckpointInfo& info,
                          const std::vector<std::pair<std::string, void*>>& blocks,
                          const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j = read_header(in, path);
    info = info_from_header(j);
    if (info.dtype != want_dtype)
        throw std::runtime_error("checkpoint dtype is " + info.dtype + ", expected " + want_dtype +
                                 ": " + path);
    const auto& jblocks = j.at("blocks");
    if (jblocks.size() != blocks.size())
        throw std::runtime_error("checkpoint block count mismatch in " + path + ": file has " +
                                 std::to_string(jblocks.size()) + ", model wants " +
                                 std::to_string(blocks.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& jb = jblocks[i];
        if (jb.at("name").get<std::string>() != blocks[i].first ||
            jb.at("rows").get<Eigen::Index>() != shapes[i].first ||
            jb.at("cols").get<Eigen::Index>() != shapes[i].second)
            throw std::runtime_error("checkpoint block mismatch at '" + blocks[i].first + "' in " +
                                     path);
        const std::size_t bytes =
            static_cast<std::size_t>(shapes[i].first * shapes[i].second) * scalar_size;
        in.read(static_cast<char*>(blocks[i].second), static_cast<std::streamsize>(bytes));
    }
    if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
}

}  // namespace detail

}  // namespace deformcast
