#include "mmm/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mmm {

using nlohmann::json;

namespace {

constexpr char kMagic[9] = "MMMCKPT1";

uint64_t fnv1a_bytes(const char* data, size_t n) {
    uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

json rng_state_to_json(const Rng::State& s) {
    json j;
    j["words"] = s.words;
    j["has_spare"] = s.has_spare;
    j["spare"] = s.spare;
    return j;
}

Rng::State rng_state_from_json(const json& j) {
    Rng::State s;
    auto words = j.at("words").get<std::vector<uint64_t>>();
    if (words.size() != 4) throw LoadError("checkpoint: bad RNG state");
    std::copy(words.begin(), words.end(), s.words.begin());
    s.has_spare = j.at("has_spare").get<bool>();
    s.spare = j.at("spare").get<double>();
    return s;
}

json blocks_to_json(const std::vector<ParamBlock>& blocks) {
    json arr = json::array();
    for (const auto& b : blocks) {
        json j;
        j["name"] = b.name;
        j["shape"] = b.shape;
        arr.push_back(std::move(j));
    }
    return arr;
}

size_t block_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

void append_payload(std::string& payload, const std::vector<ParamBlock>& blocks) {
    for (const auto& b : blocks) {
        const char* raw = reinterpret_cast<const char*>(b.data.data());
        payload.append(raw, b.data.size() * sizeof(double));
    }
}

std::vector<ParamBlock> read_blocks(const json& arr, const char* what, const std::string& payload,
                                    size_t& offset) {
    std::vector<ParamBlock> out;
    for (const auto& j : arr) {
        ParamBlock b;
        b.name = j.at("name").get<std::string>();
        b.shape = j.at("shape").get<std::vector<int>>();
        const size_t n = block_numel(b.shape);
        const size_t bytes = n * sizeof(double);
        if (offset + bytes > payload.size())
            throw LoadError(std::string("checkpoint: truncated ") + what + " payload");
        b.data.resize(n);
        std::memcpy(b.data.data(), payload.data() + offset, bytes);
        offset += bytes;
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointBlob& blob) {
    std::string payload;
    append_payload(payload, blob.params);
    append_payload(payload, blob.opt_m);
    append_payload(payload, blob.opt_v);

    json m;
    m["format_version"] = blob.format_version;
    m["precision"] = blob.precision;
    json enc;
    enc["vocab_size"] = blob.encoder_config.vocab_size;
    enc["hidden_dim"] = blob.encoder_config.hidden_dim;
    enc["layers"] = blob.encoder_config.layers;
    enc["heads"] = blob.encoder_config.heads;
    enc["max_len"] = blob.encoder_config.max_len;
    enc["dropout"] = blob.encoder_config.dropout;
    enc["seed"] = blob.encoder_config.seed;
    m["encoder"] = std::move(enc);
    m["vocab"] = blob.vocab_tokens;
    m["classifier_kind"] = blob.classifier_kind;
    m["reasoning_steps"] = blob.reasoning_steps;
    m["has_pair_head"] = blob.has_pair_head;
    m["speaker_normalize"] = blob.speaker_normalize;
    m["aggregation"] = blob.aggregation;
    m["stage_index"] = blob.stage_index;
    m["step_in_stage"] = blob.step_in_stage;
    m["dropout_rng"] = rng_state_to_json(blob.dropout_rng);
    m["sampler_rng"] = rng_state_to_json(blob.sampler_rng);
    json cursors = json::array();
    for (auto [epoch, cursor] : blob.dataset_cursors) cursors.push_back({epoch, cursor});
    m["dataset_cursors"] = std::move(cursors);
    m["early_stop_best"] = blob.early_stop_best;
    m["early_stop_non_improving"] = blob.early_stop_non_improving;
    m["early_stop_active"] = blob.early_stop_active;
    m["optimizer_step"] = blob.optimizer_step;
    m["optimizer_params"] = blob.optimizer_params;
    m["params"] = blocks_to_json(blob.params);
    m["opt_m"] = blocks_to_json(blob.opt_m);
    m["opt_v"] = blocks_to_json(blob.opt_v);
    m["payload_bytes"] = payload.size();
    char checksum[32];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(fnv1a_bytes(payload.data(), payload.size())));
    m["checksum"] = checksum;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw UsageError("cannot write checkpoint '" + path + "'");
        out.write(kMagic, 8);
        const std::string manifest = m.dump();
        out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
        out.put('\n');
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw UsageError("short write for checkpoint '" + path + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw UsageError("cannot move checkpoint into place at '" + path + "'");
}

CheckpointBlob read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw LoadError("checkpoint '" + path + "': bad magic");
    std::string manifest;
    if (!std::getline(in, manifest)) throw LoadError("checkpoint '" + path + "': missing manifest");
    json m;
    try {
        m = json::parse(manifest);
    } catch (const std::exception& e) {
        throw LoadError("checkpoint '" + path + "': manifest parse: " + e.what());
    }

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    CheckpointBlob blob;
    try {
        blob.format_version = m.at("format_version").get<int>();
        if (blob.format_version != 1)
            throw LoadError("checkpoint '" + path + "': unsupported format version " +
                            std::to_string(blob.format_version));
        blob.precision = m.at("precision").get<std::string>();
        const json& enc = m.at("encoder");
        blob.encoder_config.vocab_size = enc.at("vocab_size").get<int>();
        blob.encoder_config.hidden_dim = enc.at("hidden_dim").get<int>();
        blob.encoder_config.layers = enc.at("layers").get<int>();
        blob.encoder_config.heads = enc.at("heads").get<int>();
        blob.encoder_config.max_len = enc.at("max_len").get<int>();
        blob.encoder_config.dropout = enc.at("dropout").get<double>();
        blob.encoder_config.seed = enc.at("seed").get<uint64_t>();
        blob.vocab_tokens = m.at("vocab").get<std::vector<std::string>>();
        blob.classifier_kind = m.at("classifier_kind").get<std::string>();
        blob.reasoning_steps = m.at("reasoning_steps").get<int>();
        blob.has_pair_head = m.at("has_pair_head").get<bool>();
        blob.speaker_normalize = m.at("speaker_normalize").get<bool>();
        blob.aggregation = m.at("aggregation").get<std::string>();
        blob.stage_index = m.at("stage_index").get<int>();
        blob.step_in_stage = m.at("step_in_stage").get<long>();
        blob.dropout_rng = rng_state_from_json(m.at("dropout_rng"));
        blob.sampler_rng = rng_state_from_json(m.at("sampler_rng"));
        for (const auto& c : m.at("dataset_cursors"))
            blob.dataset_cursors.emplace_back(c.at(0).get<long>(), c.at(1).get<long>());
        blob.early_stop_best = m.at("early_stop_best").get<double>();
        blob.early_stop_non_improving = m.at("early_stop_non_improving").get<int>();
        blob.early_stop_active = m.at("early_stop_active").get<bool>();
        blob.optimizer_step = m.at("optimizer_step").get<long>();
        blob.optimizer_params = m.at("optimizer_params").get<std::vector<std::string>>();

        const size_t expected = m.at("payload_bytes").get<size_t>();
        if (payload.size() != expected)
            throw LoadError("checkpoint '" + path + "': payload size mismatch");
        char checksum[32];
        std::snprintf(checksum, sizeof(checksum), "%016llx",
                      static_cast<unsigned long long>(fnv1a_bytes(payload.data(), payload.size())));
        if (m.at("checksum").get<std::string>() != checksum)
            throw LoadError("checkpoint '" + path + "': checksum mismatch");

        size_t offset = 0;
        blob.params = read_blocks(m.at("params"), "parameter", payload, offset);
        blob.opt_m = read_blocks(m.at("opt_m"), "first-moment", payload, offset);
        blob.opt_v = read_blocks(m.at("opt_v"), "second-moment", payload, offset);
        if (offset != payload.size()) throw LoadError("checkpoint '" + path + "': trailing payload");
    } catch (const json::exception& e) {
        throw LoadError("checkpoint '" + path + "': manifest: " + e.what());
    }
    return blob;
}

}  // namespace mmm
