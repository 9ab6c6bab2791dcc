#include "navkit/chunking.hpp"

#include <optional>

#include "navkit/errors.hpp"

namespace navkit {

namespace {

struct Piece {
    std::string_view text;
    std::optional<int> node_id;  // set when this piece is an opening tag with node=""
};

// The serializer escapes < and > everywhere else, so every '<' in the input
// starts a tag and the next '>' ends it.
std::vector<Piece> split_pieces(const std::string& s) {
    std::vector<Piece> pieces;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t lt = s.find('<', i);
        if (lt == std::string::npos) {
            pieces.push_back({std::string_view(s).substr(i), std::nullopt});
            break;
        }
        if (lt > i) pieces.push_back({std::string_view(s).substr(i, lt - i), std::nullopt});
        std::size_t gt = s.find('>', lt);
        if (gt == std::string::npos) {
            pieces.push_back({std::string_view(s).substr(lt), std::nullopt});
            break;
        }
        std::string_view tag = std::string_view(s).substr(lt, gt - lt + 1);
        std::optional<int> node_id;
        if (tag.size() > 1 && tag[1] != '/') {
            std::size_t at = tag.find(" node=\"");
            if (at != std::string_view::npos) {
                std::size_t v = at + 7;
                int id = 0;
                bool any = false;
                while (v < tag.size() && tag[v] >= '0' && tag[v] <= '9') {
                    id = id * 10 + (tag[v] - '0');
                    ++v;
                    any = true;
                }
                if (any && v < tag.size() && tag[v] == '"') node_id = id;
            }
        }
        pieces.push_back({tag, node_id});
        i = gt + 1;
    }
    return pieces;
}

}  // namespace

std::vector<Chunk> chunk_dom(const std::string& serialized, const TokenizerProfile& tok,
                             int budget) {
    if (budget < 64)
        throw Error(Errc::BadConfig,
                    "chunk budget must be at least 64 tokens, got " + std::to_string(budget));

    std::vector<Chunk> chunks;
    if (serialized.empty()) return chunks;

    std::vector<Piece> pieces = split_pieces(serialized);

    Chunk current;
    auto flush = [&] {
        if (current.text.empty()) return;
        current.index = static_cast<int>(chunks.size());
        chunks.push_back(std::move(current));
        current = Chunk{};
    };

    for (const Piece& piece : pieces) {
        std::string candidate = current.text;
        candidate.append(piece.text);
        int count = static_cast<int>(tok.token_count(candidate));
        if (count <= budget) {
            current.text = std::move(candidate);
            current.token_count = count;
            if (piece.node_id) current.node_ids.insert(*piece.node_id);
            continue;
        }
        flush();
        int alone = static_cast<int>(tok.token_count(piece.text));
        if (alone > budget) {
            std::string what(piece.text.substr(0, 96));
            throw Error(Errc::BadConfig,
                        "indivisible piece of " + std::to_string(alone) +
                            " tokens exceeds chunk budget " + std::to_string(budget) + ": " +
                            what);
        }
        current.text.assign(piece.text);
        current.token_count = alone;
        if (piece.node_id) current.node_ids.insert(*piece.node_id);
    }
    flush();
    return chunks;
}

const Chunk& select_training_chunk(const std::vector<Chunk>& chunks, int target_id) {
    for (const Chunk& c : chunks)
        if (c.node_ids.count(target_id)) return c;
    throw Error(Errc::NotFound,
                "target node " + std::to_string(target_id) + " is in none of the " +
                    std::to_string(chunks.size()) + " chunks");
}

const Chunk& select_inference_chunk(const std::vector<Chunk>& chunks) {
    if (chunks.empty()) throw Error(Errc::EmptyInput, "no chunks to select from");
    return chunks.back();
}

} // namespace navkit
