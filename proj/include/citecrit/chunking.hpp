#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citecrit/embedding.hpp"
#include "citecrit/text.hpp"

namespace citecrit {

enum class ChunkUnit { characters, tokens };

/// A contiguous piece of a page. `start`/`end` are code-point offsets into
/// the page text; the chunks of a page tile it exactly.
struct Chunk {
    std::string web_id;
    int chunk_idx = 0;
    std::string text;
    ChunkUnit unit = ChunkUnit::characters;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const Chunk&) const = default;
};

enum class SelectionMethod { similarity_argmax, lcs_match };

struct ChunkSelection {
    std::string web_id;
    int chunk_idx = 0;
    double score = 0.0;
    SelectionMethod method = SelectionMethod::lcs_match;
    std::string focal;
};

std::string_view unit_name(ChunkUnit unit);
std::string_view method_name(SelectionMethod method);

/// Fixed-length chunks of `len` code points; the last may be shorter.
std::vector<Chunk> segment_chars(std::string_view text, std::size_t len, const std::string& web_id = {});

using Tokenizer = std::function<std::vector<text::Token>(std::u32string_view)>;

/// Chunks of `len` tokens. Whitespace between tokens belongs to the chunk
/// before it and leading whitespace to chunk 0, so the spans still tile.
std::vector<Chunk> segment_tokens(std::string_view text, std::size_t len, const Tokenizer& tokenizer,
                                  const std::string& web_id = {});
std::vector<Chunk> segment_tokens(std::string_view text, std::size_t len, const std::string& web_id = {});

/// Longest common subsequence of the case-folded code points of a and b.
std::size_t lcs_length(std::string_view a, std::string_view b);
std::size_t lcs_length(std::u32string_view a, std::u32string_view b);

/// Chunk with the longest LCS against `excerpt`; ties go to the lowest chunk_idx.
ChunkSelection match_excerpt(std::span<const Chunk> chunks, std::string_view excerpt);

/// Chunk whose embedding is most cosine-similar to `focal`; scores within
/// 1e-12 tie and go to the lowest chunk_idx. `focal_text` is only recorded
/// in the result.
ChunkSelection select_by_similarity(std::span<const Chunk> chunks, const EmbeddingVector& focal,
                                    const Embedder& embedder, std::string_view focal_text = {});

/// Same selection with chunk embeddings computed ahead of time
/// (`chunk_embeddings[i]` belongs to `chunks[i]`).
ChunkSelection select_by_similarity(std::span<const Chunk> chunks,
                                    std::span<const EmbeddingVector> chunk_embeddings,
                                    const EmbeddingVector& focal, std::string_view focal_text = {});

/// Joins sentences with single spaces after collapsing internal whitespace.
std::string merge_focal_sentences(std::span<const std::string> sentences);

/// Chunk dump: CSV `web_id,chunk_idx,unit,start,end` plus a JSONL sidecar of
/// `{"web_id","chunk_idx","text"}` records in the same order.
void write_chunk_dump(std::span<const Chunk> chunks, std::ostream& csv_out, std::ostream& text_out);

/// Selection log row; `focal_hash` is the SHA-256 of the focal text.
void write_selection_log_header(std::ostream& out);
void write_selection_log_row(std::ostream& out, const std::string& query_id, const ChunkSelection& selection);

}  // namespace citecrit
