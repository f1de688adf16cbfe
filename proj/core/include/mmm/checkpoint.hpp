#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmm/encoder.hpp"
#include "mmm/rng.hpp"

namespace mmm {

// Parameter block stored at full (64-bit) precision regardless of the run
// precision.
struct ParamBlock {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

// Everything needed to restore a model and continue training bit-identically.
// File layout: 8-byte magic "MMMCKPT1", a single-line JSON manifest
// (configs, shapes, counters, checksum) terminated by '\n', then the raw
// little-endian 64-bit float blocks in manifest order (params, then
// optimizer first moments, then second moments).
struct CheckpointBlob {
    int format_version = 1;
    std::string precision = "f64";

    EncoderConfig encoder_config;
    std::vector<std::string> vocab_tokens;

    std::string classifier_kind;  // "man" | "fcnn" | "" when absent
    int reasoning_steps = 0;
    bool has_pair_head = false;
    bool speaker_normalize = true;
    std::string aggregation = "sum";

    int stage_index = 0;
    long step_in_stage = 0;  // > 0 marks a mid-stage checkpoint
    Rng::State dropout_rng;
    Rng::State sampler_rng;
    std::vector<std::pair<long, long>> dataset_cursors;  // (epoch, cursor) per plan dataset
    double early_stop_best = 0;
    int early_stop_non_improving = 0;
    bool early_stop_active = false;

    long optimizer_step = 0;
    std::vector<std::string> optimizer_params;  // stage parameter order for moments

    std::vector<ParamBlock> params;
    std::vector<ParamBlock> opt_m;
    std::vector<ParamBlock> opt_v;
};

void write_checkpoint(const std::string& path, const CheckpointBlob& blob);
CheckpointBlob read_checkpoint(const std::string& path);

}  // namespace mmm
