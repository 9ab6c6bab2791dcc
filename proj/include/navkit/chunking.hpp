#pragma once

#include <set>
#include <string>
#include <vector>

#include "navkit/tokenizer.hpp"

namespace navkit {

struct Chunk {
    int index = 0;
    std::string text;
    int token_count = 0;
    std::set<int> node_ids;  // elements whose opening tag lies in this chunk
};

/// Splits a serialized DOM into sequential chunks of at most `budget` tokens.
/// Split points fall only at tag boundaries (immediately before `<` or after
/// `>`), so no opening tag is ever cut; chunk texts concatenate back to the
/// input exactly. budget < 64 → BadConfig; an indivisible piece (one tag, or
/// one text run between tags) that alone exceeds the budget → error naming it.
std::vector<Chunk> chunk_dom(const std::string& serialized, const TokenizerProfile& tok,
                             int budget);

/// Earliest chunk whose node_ids contains target_id; NotFound otherwise.
const Chunk& select_training_chunk(const std::vector<Chunk>& chunks, int target_id);

/// Last chunk (the target's location is unknown at inference time).
/// Empty list → EmptyInput.
const Chunk& select_inference_chunk(const std::vector<Chunk>& chunks);

} // namespace navkit
