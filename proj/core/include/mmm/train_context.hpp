#pragma once

#include <cstdint>
#include <optional>

#include "mmm/data.hpp"
#include "mmm/encoder.hpp"
#include "mmm/man.hpp"
#include "mmm/rng.hpp"

namespace mmm {

// The live model: one encoder plus whichever heads the pipeline has created
// so far. There is exactly one parameter store per session; `version`
// increments on every optimizer step so parameter sharing across tasks is
// observable.
template <class Real>
struct TrainContext {
    Encoder<Real> encoder;
    std::optional<PairHead<Real>> pair_head;
    std::optional<TopClassifier<Real>> mcqa_head;
    Vocabulary vocab;
    Rng dropout_rng{0};
    uint64_t version = 0;
};

}  // namespace mmm
