#include "citecrit/chunking.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/hashing.hpp"

namespace citecrit {

std::string_view unit_name(ChunkUnit unit) {
    return unit == ChunkUnit::characters ? "characters" : "tokens";
}

std::string_view method_name(SelectionMethod method) {
    return method == SelectionMethod::lcs_match ? "lcs_match" : "similarity_argmax";
}

std::vector<Chunk> segment_chars(std::string_view text, std::size_t len, const std::string& web_id) {
    if (len == 0) throw ValidationError("chunk length must be positive");
    const std::u32string cps = text::decode_utf8(text);
    if (cps.empty()) throw ValidationError("cannot segment empty text" + (web_id.empty() ? "" : " of " + web_id));
    std::vector<Chunk> chunks;
    const std::u32string_view view(cps);
    for (std::size_t start = 0; start < cps.size(); start += len) {
        const std::size_t end = std::min(cps.size(), start + len);
        chunks.push_back({web_id, static_cast<int>(chunks.size()), text::encode_utf8(view.substr(start, end - start)),
                          ChunkUnit::characters, start, end});
    }
    return chunks;
}

std::vector<Chunk> segment_tokens(std::string_view text, std::size_t len, const Tokenizer& tokenizer,
                                  const std::string& web_id) {
    if (len == 0) throw ValidationError("chunk length must be positive");
    const std::u32string cps = text::decode_utf8(text);
    if (cps.empty()) throw ValidationError("cannot segment empty text" + (web_id.empty() ? "" : " of " + web_id));
    const std::u32string_view view(cps);
    const std::vector<text::Token> tokens = tokenizer(view);
    if (tokens.empty()) throw ValidationError("tokenizer produced no tokens" + (web_id.empty() ? "" : " for " + web_id));
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const bool ordered = tokens[i].begin < tokens[i].end && tokens[i].end <= cps.size() &&
                             (i == 0 || tokens[i - 1].end <= tokens[i].begin);
        if (!ordered) throw ValidationError("tokenizer produced overlapping or out-of-range spans");
    }
    std::vector<Chunk> chunks;
    for (std::size_t first = 0; first < tokens.size(); first += len) {
        const std::size_t next = first + len;
        const std::size_t start = first == 0 ? 0 : tokens[first].begin;
        const std::size_t end = next < tokens.size() ? tokens[next].begin : cps.size();
        chunks.push_back({web_id, static_cast<int>(chunks.size()), text::encode_utf8(view.substr(start, end - start)),
                          ChunkUnit::tokens, start, end});
    }
    return chunks;
}

std::vector<Chunk> segment_tokens(std::string_view text, std::size_t len, const std::string& web_id) {
    return segment_tokens(text, len, [](std::u32string_view s) { return text::tokenize(s); }, web_id);
}

std::size_t lcs_length(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    if (b.empty()) return 0;
    const std::u32string fb = text::fold_case(b);
    std::vector<std::size_t> prev(fb.size() + 1, 0);
    std::vector<std::size_t> cur(fb.size() + 1, 0);
    for (const char32_t ca : a) {
        const char32_t fa = text::fold_case(ca);
        for (std::size_t j = 1; j <= fb.size(); ++j) {
            cur[j] = (fa == fb[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[fb.size()];
}

std::size_t lcs_length(std::string_view a, std::string_view b) {
    const std::u32string fa = text::fold_case(std::u32string_view(text::decode_utf8(a)));
    const std::u32string fb = text::fold_case(std::u32string_view(text::decode_utf8(b)));
    return lcs_length(std::u32string_view(fa), std::u32string_view(fb));
}

namespace {

// True when (score, idx) should replace the current best under the
// "highest score, then lowest chunk_idx" rule. Scores within `tie` count as
// equal, so rounding in the last bits cannot decide between chunks.
bool better(double score, int idx, double best_score, int best_idx, double tie = 0.0) {
    if (score > best_score + tie) return true;
    return std::abs(score - best_score) <= tie && idx < best_idx;
}

constexpr double kCosineTie = 1e-12;

}  // namespace

ChunkSelection match_excerpt(std::span<const Chunk> chunks, std::string_view excerpt) {
    if (chunks.empty()) throw ValidationError("match_excerpt: empty chunk list");
    if (excerpt.empty()) throw ValidationError("match_excerpt: empty excerpt");
    const std::u32string folded_excerpt = text::fold_case(std::u32string_view(text::decode_utf8(excerpt)));
    ChunkSelection best{chunks.front().web_id, chunks.front().chunk_idx, -1.0, SelectionMethod::lcs_match,
                        std::string(excerpt)};
    for (const Chunk& c : chunks) {
        const std::u32string folded = text::fold_case(std::u32string_view(text::decode_utf8(c.text)));
        const auto score = static_cast<double>(lcs_length(std::u32string_view(folded), folded_excerpt));
        if (better(score, c.chunk_idx, best.score, best.chunk_idx)) {
            best.web_id = c.web_id;
            best.chunk_idx = c.chunk_idx;
            best.score = score;
        }
    }
    return best;
}

ChunkSelection select_by_similarity(std::span<const Chunk> chunks, std::span<const EmbeddingVector> chunk_embeddings,
                                    const EmbeddingVector& focal, std::string_view focal_text) {
    if (chunks.empty()) throw ValidationError("select_by_similarity: empty chunk list");
    if (chunks.size() != chunk_embeddings.size()) {
        throw ValidationError("select_by_similarity: one embedding per chunk required");
    }
    ChunkSelection best{chunks.front().web_id, chunks.front().chunk_idx, -2.0,
                        SelectionMethod::similarity_argmax, std::string(focal_text)};
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const double score = cosine_similarity(chunk_embeddings[i], focal);
        if (better(score, chunks[i].chunk_idx, best.score, best.chunk_idx, kCosineTie)) {
            best.web_id = chunks[i].web_id;
            best.chunk_idx = chunks[i].chunk_idx;
            best.score = score;
        }
    }
    return best;
}

ChunkSelection select_by_similarity(std::span<const Chunk> chunks, const EmbeddingVector& focal,
                                    const Embedder& embedder, std::string_view focal_text) {
    if (chunks.empty()) throw ValidationError("select_by_similarity: empty chunk list");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const Chunk& c : chunks) texts.push_back(c.text);
    const std::vector<EmbeddingVector> embeddings = embedder.embed_batch(texts);
    return select_by_similarity(chunks, embeddings, focal, focal_text);
}

std::string merge_focal_sentences(std::span<const std::string> sentences) {
    if (sentences.empty()) throw ValidationError("merge_focal_sentences: empty sentence list");
    std::string out;
    for (const std::string& s : sentences) {
        const std::string normalized = text::normalize_space(s);
        if (normalized.empty()) continue;
        if (!out.empty()) out.push_back(' ');
        out += normalized;
    }
    return out;
}

void write_chunk_dump(std::span<const Chunk> chunks, std::ostream& csv_out, std::ostream& text_out) {
    csv_out << "web_id,chunk_idx,unit,start,end\n";
    for (const Chunk& c : chunks) {
        csv::write_row(csv_out, {c.web_id, std::to_string(c.chunk_idx), std::string(unit_name(c.unit)),
                                 std::to_string(c.start), std::to_string(c.end)});
        nlohmann::ordered_json j;
        j["web_id"] = c.web_id;
        j["chunk_idx"] = c.chunk_idx;
        j["text"] = c.text;
        text_out << j.dump() << '\n';
    }
}

void write_selection_log_header(std::ostream& out) {
    out << "query_id,web_id,chunk_idx,method,score,focal_hash\n";
}

void write_selection_log_row(std::ostream& out, const std::string& query_id, const ChunkSelection& s) {
    csv::write_row(out, {query_id, s.web_id, std::to_string(s.chunk_idx), std::string(method_name(s.method)),
                         csv::format_double(s.score), sha256_hex(s.focal)});
}

}  // namespace citecrit
